import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))


@pytest.fixture
def toy_problem():
    """min -x + Q(x), x in {0..3}, Q(x) = min 0.5 y s.t. y >= 3.5 - x.

    The first master picks x = 3 with theta = 0, so LB = -3, UB = -2.75 and
    the first gap is 1/11.
    """
    import numpy as np

    from rlbd.lp import LinearProgram
    from rlbd.model import Scenario, TwoStageProblem

    first = LinearProgram([-1.0], np.zeros((0, 1)), [], [], [0.0], [3.0])
    sc = Scenario(np.array([[1.0]]), np.array([3.5]), np.array([[1.0]]),
                  np.array([0.5]), 1.0)
    return TwoStageProblem(first.c, first, np.arange(1), [sc],
                           theta_lower=np.zeros(1))


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import RESULTS
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(RESULTS):
        title, ok, why, secs = RESULTS[num]
        line = f"[{'PASS' if ok else 'FAIL'}] {num:2d}. {title} ({secs:.1f}s)"
        terminalreporter.write_line(line + (f" -- {why}" if why else ""))
