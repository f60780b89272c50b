import numpy as np
import pytest

from rlbd.benders import BendersRun, Cut
from rlbd.features import (CUT_NAMES, FEATURE_NAMES, GLOBAL_NAMES, STATE_DIM,
                           FeatureDump, build_state, global_features,
                           normalize, violation)
from rlbd.model import ev_to_standard_form, make_ev_instance

from oracles import highs_recourse

IDX = {n: k for k, n in enumerate(FEATURE_NAMES)}


@pytest.fixture(scope="module")
def problem():
    return ev_to_standard_form(make_ev_instance(1, 2, 3, 8))


def test_dimensions():
    assert len(GLOBAL_NAMES) == 19 and len(CUT_NAMES) == 5
    assert STATE_DIM == 24


def test_violation_formula():
    cut = Cut(1, 10.0, np.array([1.0, 1.0]), 1)
    x = np.array([2.0, 3.0])
    assert violation(cut, x, [0.0, 5.0]) == 0.0
    assert violation(cut, x, [0.0, 0.0]) == 5.0
    with pytest.raises(ValueError):
        violation(Cut(-1, 0.0, np.zeros(2), 1), x, [0.0])


def test_first_iteration(problem):
    run = BendersRun(problem)
    st = run.advance()
    raw = build_state(st, raw=True)
    assert raw.shape == (problem.n_scenarios, STATE_DIM)
    for name in ("dLB", "dUB", "dGap", "rho_Gap", "rho_LB", "rho_UB",
                 "K_prev", "C_cum", "NC"):
        assert np.all(raw[:, IDX[name]] == 0.0), name
    # theta sits at its lower bound, so v = Q(x) - kappa >= 0
    for w, sc in enumerate(problem.scenarios):
        q = highs_recourse(sc, st.x_hat) + sc.kappa
        assert raw[w, IDX["v"]] == pytest.approx(q - problem.theta_lower[w],
                                                 abs=1e-7 * (1 + abs(q)))
        assert raw[w, IDX["v"]] >= -1e-9


def test_global_block_shared_and_statistics(problem):
    run = BendersRun(problem)
    run.advance()
    run.add([0, 3])
    st = run.advance()
    X = build_state(st)
    assert np.all(X[:, :19] == X[0, :19])
    raw = build_state(st, raw=True)
    p = problem.probabilities
    assert raw[0, IDX["v_mean"]] == pytest.approx(
        p @ raw[:, IDX["v"]], abs=1e-12 * (1 + abs(raw[0, IDX["v_mean"]])))
    assert raw[0, IDX["Q_min"]] <= raw[0, IDX["Q_mean"]] <= raw[0, IDX["Q_max"]]
    assert raw[0, IDX["K_prev"]] == 2 and raw[0, IDX["C_cum"]] == 2
    assert np.all(np.isfinite(X))


def test_nc_counts():
    problem = ev_to_standard_form(make_ev_instance(2, 2, 2, 8))
    run = BendersRun(problem, eps_tol=-1.0)
    run.advance()
    run.add([2, 5])
    run.advance()
    run.add([2])
    st = run.advance()
    nc = build_state(st, raw=True)[:, IDX["NC"]]
    assert nc[2] == 2 and nc[5] == 1 and nc[7] == 0
    assert nc.sum() == 3


def test_rate_with_zero_previous_gap(problem):
    run = BendersRun(problem)
    run.advance()
    run.state.history[-1].gap_raw = 0.0
    run.add([0])
    st = run.advance()
    assert np.all(np.isfinite(global_features(st)))


def test_identical_candidates_identical_rows(problem):
    run = BendersRun(problem)
    st = run.advance()
    X = build_state(st, [st.candidates[1], st.candidates[1]])
    assert X[0].tobytes() == X[1].tobytes()


def test_normalization_modes():
    raw = np.zeros((1, STATE_DIM))
    raw[0, IDX["LB"]] = -(np.e - 1)
    raw[0, IDX["t"]] = 50
    raw[0, IDX["Gap"]] = 0.5
    out = normalize(raw, 100)
    assert out[0, IDX["LB"]] == pytest.approx(-1.0)
    assert out[0, IDX["t"]] == 0.5
    assert out[0, IDX["Gap"]] == 0.5
    assert np.array_equal(normalize(raw, 100, "none"), raw)
    with pytest.raises(ValueError):
        normalize(raw, 100, "zscore")


def test_feature_dump(problem, tmp_path):
    run = BendersRun(problem)
    st = run.advance()
    path = tmp_path / "f.csv"
    with FeatureDump(path) as dump:
        dump.write(1, st.t, build_state(st, raw=True))
    lines = path.read_text().splitlines()
    assert lines[0].split(",")[:4] == ["episode", "t", "scenario", "t"]
    assert len(lines) == 1 + problem.n_scenarios
