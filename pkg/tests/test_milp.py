import itertools

import numpy as np
import pytest

from rlbd.lp import LinearProgram
from rlbd.milp import (MipStatus, MixedIntegerProgram, solve_extensive_form,
                       solve_mip)
from rlbd.model import (Scenario, TwoStageProblem, ev_to_standard_form,
                        make_ev_instance)

from oracles import highs_recourse, lattice_enumeration


def test_single_binary():
    lp = LinearProgram([-1.0], np.zeros((0, 1)), [], [], [0], [1])
    sol = solve_mip(MixedIntegerProgram(lp, [0]))
    assert sol.status is MipStatus.OPTIMAL
    assert sol.primal[0] == 1 and sol.objective == -1


def test_one_row_knapsack():
    lp = LinearProgram([-3, -2], [[1, 1]], ["<="], [1], [0, 0], [1, 1])
    sol = solve_mip(MixedIntegerProgram(lp, [0, 1]))
    assert sol.primal.tolist() == [1.0, 0.0]
    assert sol.objective == -3


def test_infeasible_integer_program():
    lp = LinearProgram([1.0], [[2.0]], ["="], [1.0], [0], [3])
    assert solve_mip(MixedIntegerProgram(lp, [0])).status is \
        MipStatus.INFEASIBLE


def random_mip(rng, n_int, n_cont, m, dom=4):
    n = n_int + n_cont
    A = rng.integers(-4, 5, size=(m, n)).astype(float)
    lower = np.zeros(n)
    upper = np.concatenate([rng.integers(1, dom, size=n_int),
                            rng.integers(1, 5, size=n_cont)]).astype(float)
    x0 = np.concatenate([rng.integers(0, upper[:n_int] + 1),
                         rng.random(n_cont) * upper[n_int:]])
    senses = [("<=", ">=")[k] for k in rng.integers(0, 2, size=m)]
    rhs = A @ x0
    for i, s in enumerate(senses):
        rhs[i] += rng.random() * 2 * (1 if s == "<=" else -1)
    c = rng.normal(size=n).round(3)
    return c, A, senses, rhs, lower, upper


def test_six_integers_match_lattice_oracle():
    rng = np.random.default_rng(5)
    for _ in range(5):
        c, A, senses, rhs, lo, hi = random_mip(rng, 6, 2, 4)
        expected = lattice_enumeration(c, A, senses, rhs, lo, hi, range(6))
        sol = solve_mip(MixedIntegerProgram(
            LinearProgram(c, A, senses, rhs, lo, hi), range(6)))
        assert sol.status is MipStatus.OPTIMAL
        assert sol.objective == pytest.approx(expected, rel=1e-7, abs=1e-9)
        assert np.all(sol.primal[:6] == np.round(sol.primal[:6]))


def test_pure_integer_up_to_eight_vars_domain_four():
    rng = np.random.default_rng(17)
    for trial in range(12):
        n = int(rng.integers(2, 9))
        c, A, senses, rhs, lo, hi = random_mip(rng, n, 0, 3, dom=4)
        expected = lattice_enumeration(c, A, senses, rhs, lo, hi, range(n))
        sol = solve_mip(MixedIntegerProgram(
            LinearProgram(c, A, senses, rhs, lo, hi), range(n)), gap_tol=0.0)
        assert sol.objective == pytest.approx(expected, rel=1e-9, abs=1e-9)
        assert sol.best_bound <= sol.objective + 1e-7 * (1 + abs(sol.objective))


def test_gap_tolerance_respected():
    rng = np.random.default_rng(9)
    c, A, senses, rhs, lo, hi = random_mip(rng, 6, 2, 4)
    sol = solve_mip(MixedIntegerProgram(
        LinearProgram(c, A, senses, rhs, lo, hi), range(6)), gap_tol=0.05)
    assert sol.status is MipStatus.OPTIMAL
    assert sol.gap <= 0.05 + 1e-12


def test_time_limit_returns_bound():
    rng = np.random.default_rng(9)
    c, A, senses, rhs, lo, hi = random_mip(rng, 8, 0, 4)
    sol = solve_mip(MixedIntegerProgram(
        LinearProgram(c, A, senses, rhs, lo, hi), range(8)), time_limit_s=0.0)
    assert sol.status in (MipStatus.TIME_LIMIT, MipStatus.OPTIMAL)
    assert np.isfinite(sol.best_bound)


def test_deterministic():
    rng = np.random.default_rng(2)
    c, A, senses, rhs, lo, hi = random_mip(rng, 6, 2, 4)
    mip = MixedIntegerProgram(LinearProgram(c, A, senses, rhs, lo, hi),
                              range(6))
    a, b = solve_mip(mip), solve_mip(mip)
    assert a.primal.tobytes() == b.primal.tobytes()
    assert a.nodes_explored == b.nodes_explored


def test_extensive_form_recourse_free_equals_first_stage():
    first = LinearProgram([-2, -3], [[1, 1]], ["<="], [3], [0, 0], [2, 2])
    sc = Scenario(np.zeros((1, 1)), np.zeros(1), np.zeros((1, 2)),
                  np.zeros(1), 1.0)
    prob = TwoStageProblem(first.c, first, np.arange(2), [sc])
    ef = solve_extensive_form(prob)
    direct = solve_mip(MixedIntegerProgram(first, [0, 1]))
    assert ef.objective == pytest.approx(direct.objective)
    assert ef.objective == pytest.approx(-8.0)


def ev_enumeration(inst):
    """Brute force over (y, z) with one recourse LP per scenario."""
    prob = ev_to_standard_form(inst)
    I = inst.n_stations
    best = np.inf
    ranges = [range(0, int(m) + 1) for m in inst.M]
    for z in itertools.product(*ranges):
        z = np.array(z, float)
        y = (z > 0).astype(float)
        x = np.concatenate([y, z])
        val = prob.c @ x
        for sc in prob.scenarios:
            val += sc.probability * (highs_recourse(sc, x) + sc.kappa)
        best = min(best, val)
    return best


def test_extensive_form_matches_enumeration_small_ev():
    inst = make_ev_instance(3, 2, 3, 2)
    inst.M[:] = 4
    expected = ev_enumeration(inst)
    ef = solve_extensive_form(ev_to_standard_form(inst))
    assert ef.status is MipStatus.OPTIMAL
    assert ef.objective == pytest.approx(expected, rel=1e-8)
