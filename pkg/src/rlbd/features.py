"""Per-candidate state vectors for the cut-selection policy.

Each candidate cut is described by a global block shared by all candidates
(convergence statistics, master size and time, recourse statistics) followed
by five cut-level features. Rates use ``eps = 1e-8`` in their denominators.
"""

from __future__ import annotations

import csv

import numpy as np

from .benders import GAP_EPS, BendersState, Cut

__all__ = [
    "GLOBAL_NAMES",
    "CUT_NAMES",
    "FEATURE_NAMES",
    "N_GLOBAL",
    "N_CUT",
    "STATE_DIM",
    "NORMALIZATIONS",
    "violation",
    "global_features",
    "cut_features",
    "normalize",
    "build_state",
    "FeatureDump",
]

GLOBAL_NAMES = (
    "t", "LB", "UB", "Gap", "dLB", "dUB", "dGap", "rho_Gap", "rho_LB",
    "rho_UB", "v_mean", "v_max", "K_prev", "C_cum", "T_MP", "Q_mean",
    "Q_max", "Q_min", "Q_std",
)
CUT_NAMES = ("v", "dual_norm", "intercept_abs", "coeff_norm", "NC")
FEATURE_NAMES = GLOBAL_NAMES + CUT_NAMES
N_GLOBAL = len(GLOBAL_NAMES)
N_CUT = len(CUT_NAMES)
STATE_DIM = N_GLOBAL + N_CUT

# columns squashed by sign(x) * log1p(|x|); the rest pass through
_LOG_COLUMNS = np.array([n in {
    "LB", "UB", "dLB", "dUB", "v_mean", "v_max", "T_MP", "Q_mean", "Q_max",
    "Q_min", "Q_std", "v", "dual_norm", "intercept_abs", "coeff_norm",
} for n in FEATURE_NAMES])
_HORIZON_COLUMNS = np.array([n in {"t", "C_cum"} for n in FEATURE_NAMES])

NORMALIZATIONS = ("signed_log", "none")


def violation(cut: Cut, x_hat, theta_hat) -> float:
    """Amount by which ``cut`` exceeds the master's ``theta`` at ``x_hat``."""
    if cut.scenario < 0:
        raise ValueError("violation is defined for scenario cuts only")
    return cut.value(x_hat) - float(theta_hat[cut.scenario])


def global_features(state: BendersState) -> np.ndarray:
    """The 19 shared features after the subproblems of iteration ``t``.

    Bounds and gap are the raw values of this iteration. Differences are
    oriented so that progress is positive and are zero at ``t = 1``.
    """
    if state.t < 1 or state.recourse is None:
        raise ValueError("state has no solved iteration yet")
    p = state.problem.probabilities
    lb, ub, g = state.lb, state.ub_raw, state.gap_raw
    d_lb = d_ub = d_gap = rho_gap = rho_lb = rho_ub = 0.0
    if len(state.history) > 1:
        prev = state.history[-2]
        d_lb = lb - prev.lb
        d_ub = prev.ub_raw - ub
        d_gap = prev.gap_raw - g
        rho_gap = d_gap / (prev.gap_raw + GAP_EPS)
        rho_lb = d_lb / (abs(prev.lb) + GAP_EPS)
        rho_ub = d_ub / (abs(prev.ub_raw) + GAP_EPS)
    v = state.violations
    Q = state.recourse
    return np.array([
        state.t, lb, ub, g, d_lb, d_ub, d_gap, rho_gap, rho_lb, rho_ub,
        float(p @ v), float(v.max()), state.last_added, state.cum_cuts,
        state.master_time, float(p @ Q), float(Q.max()), float(Q.min()),
        float(Q.std()),
    ])


def cut_features(state: BendersState, candidates=None) -> np.ndarray:
    """``(len(candidates), 5)`` local features.

    The intercept magnitude is ``|pi . h|``; the scenario constant is left
    out so that it reflects the dual alone.
    """
    cands = state.candidates if candidates is None else candidates
    scen = state.problem.scenarios
    out = np.empty((len(cands), N_CUT))
    for k, cut in enumerate(cands):
        w = cut.scenario
        pi = cut.dual
        out[k] = (violation(cut, state.x_hat, state.theta_hat),
                  np.linalg.norm(pi), abs(float(pi @ scen[w].h)),
                  np.linalg.norm(cut.coeffs), state.nc[w])
    return out


def normalize(raw: np.ndarray, t_max: int,
              mode: str = "signed_log") -> np.ndarray:
    """Squash magnitude columns and scale ``t`` and ``C_cum`` by ``t_max``."""
    if mode == "none":
        return np.array(raw, dtype=float)
    if mode != "signed_log":
        raise ValueError(f"unknown normalization {mode!r}")
    out = np.array(raw, dtype=float)
    logc = out[..., _LOG_COLUMNS]
    out[..., _LOG_COLUMNS] = np.sign(logc) * np.log1p(np.abs(logc))
    out[..., _HORIZON_COLUMNS] /= t_max
    return out


def build_state(state: BendersState, candidates=None, t_max: int = 500,
                mode: str = "signed_log", raw: bool = False) -> np.ndarray:
    """Stack ``[global | local]`` rows, one per candidate cut.

    Parameters
    ----------
    state : BendersState
        State after the master and subproblems of the current iteration.
    candidates : list of Cut, optional
        Defaults to this iteration's candidates.
    t_max : int
        Horizon used to scale ``t`` and ``C_cum``.
    mode : {'signed_log', 'none'}
    raw : bool
        Return the unnormalized features.

    Returns
    -------
    ndarray, shape (n_candidates, 24)
    """
    g = global_features(state)
    local = cut_features(state, candidates)
    X = np.empty((local.shape[0], STATE_DIM))
    X[:, :N_GLOBAL] = g
    X[:, N_GLOBAL:] = local
    if raw:
        return X
    return normalize(X, t_max, mode)


class FeatureDump:
    """CSV sink with one row of raw features per candidate per iteration."""

    header = ("episode", "t", "scenario") + FEATURE_NAMES

    def __init__(self, path):
        self._fh = open(path, "w", newline="")
        self._w = csv.writer(self._fh)
        self._w.writerow(self.header)

    def write(self, episode: int, t: int, raw: np.ndarray) -> None:
        for w, row in enumerate(raw):
            self._w.writerow([episode, t, w] + [repr(float(v)) for v in row])

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
