"""Benders decomposition loop with pluggable cut selection.

The master over ``(x, theta)`` carries one ``theta`` per scenario. A scenario
cut reads ``theta_w >= intercept - coeffs . x``; an aggregated (single-cut)
row reads ``sum_w p_w theta_w >= intercept - coeffs . x``.
"""

from __future__ import annotations

import csv
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .lp import LpStatus, _solve_arrays
from .milp import MipStatus, MixedIntegerProgram, solve_mip
from .lp import LinearProgram
from .model import TwoStageProblem, make_rng

__all__ = [
    "GAP_EPS",
    "MasterUnbounded",
    "SubproblemInfeasible",
    "MasterTimeLimit",
    "Cut",
    "IterationRecord",
    "BendersState",
    "MasterResult",
    "SubproblemResult",
    "gap",
    "work_seconds",
    "build_and_solve_master",
    "solve_subproblems",
    "compute_bounds",
    "make_cuts",
    "aggregate_cut",
    "SelectAll",
    "Aggregate",
    "RandomK",
    "BendersRun",
    "BendersResult",
    "run_benders",
    "write_trace_csv",
    "TRACE_HEADER",
]

log = logging.getLogger(__name__)

GAP_EPS = 1e-8
VIOLATION_TOL = 1e-9


class MasterUnbounded(RuntimeError):
    """A scenario has neither a cut nor a finite theta lower bound."""


class SubproblemInfeasible(RuntimeError):
    """Relatively complete recourse does not hold at the queried point."""


class MasterTimeLimit(RuntimeError):
    """The master hit its time limit before finding any feasible point."""


def gap(ub: float, lb: float) -> float:
    """``(ub - lb) / (|ub| + 1e-8)``."""
    return (ub - lb) / (abs(ub) + GAP_EPS)


def work_seconds(pivots: int, nodes: int = 0) -> float:
    """Deterministic stand-in for solve time: 10us per pivot, 100us per node."""
    return 1e-5 * pivots + 1e-4 * nodes


@dataclass
class Cut:
    scenario: int  # -1 marks a probability-weighted aggregate
    intercept: float
    coeffs: np.ndarray
    born_iter: int
    dual: np.ndarray | None = None

    def value(self, x) -> float:
        return float(self.intercept - self.coeffs @ x)


@dataclass
class IterationRecord:
    t: int
    lb: float
    ub: float
    ub_raw: float
    gap: float
    gap_raw: float
    master_time: float
    sub_time: float
    cuts_added: int = 0
    cum_cuts: int = 0
    selected: tuple = ()
    master_nodes: int = 0
    master_pivots: int = 0


@dataclass
class BendersState:
    """Everything the loop (and the feature builder) knows after iteration t."""

    problem: TwoStageProblem
    t: int = 0
    cuts: list = field(default_factory=list)
    nc: np.ndarray | None = None
    lb: float = -np.inf
    ub: float = np.inf
    ub_raw: float = np.inf
    gap: float = np.inf
    gap_raw: float = np.inf
    x_hat: np.ndarray | None = None
    theta_hat: np.ndarray | None = None
    best_x: np.ndarray | None = None
    candidates: list = field(default_factory=list)
    violations: np.ndarray | None = None
    recourse: np.ndarray | None = None
    master_time: float = 0.0
    history: list = field(default_factory=list)
    duality_residuals: list = field(default_factory=list)

    def __post_init__(self):
        if self.nc is None:
            self.nc = np.zeros(self.problem.n_scenarios, dtype=np.int64)

    @property
    def cum_cuts(self) -> int:
        return len(self.cuts)

    @property
    def last_added(self) -> int:
        return self.history[-2].cuts_added if len(self.history) > 1 else 0


@dataclass
class MasterResult:
    x: np.ndarray
    theta: np.ndarray
    lb: float
    solve_time: float
    nodes: int
    pivots: int


@dataclass
class SubproblemResult:
    duals: np.ndarray        # (S, rows)
    values: np.ndarray       # Q_w(x) including kappa_w
    dual_values: np.ndarray  # pi_w . (h_w - T_w x) + kappa_w
    pivots: int
    kappa: np.ndarray | None = None

    @property
    def duality_residuals(self) -> np.ndarray:
        """``|primal - dual| / (1 + |primal|)`` of the recourse LPs."""
        kappa = 0.0 if self.kappa is None else self.kappa
        primal = self.values - kappa
        dual = self.dual_values - kappa
        return np.abs(primal - dual) / (1.0 + np.abs(primal))


def _master_program(problem: TwoStageProblem, cuts) -> MixedIntegerProgram:
    fs = problem.first_stage
    n1, S = problem.n1, problem.n_scenarios
    p = problem.probabilities
    rows1 = fs.A.shape[0]
    A = np.zeros((rows1 + len(cuts), n1 + S))
    A[:rows1, :n1] = fs.A
    rhs = np.empty(rows1 + len(cuts))
    rhs[:rows1] = fs.rhs
    for k, cut in enumerate(cuts):
        A[rows1 + k, :n1] = cut.coeffs
        if cut.scenario >= 0:
            A[rows1 + k, n1 + cut.scenario] = 1.0
        else:
            A[rows1 + k, n1:] = p
        rhs[rows1 + k] = cut.intercept
    senses = np.concatenate([fs.senses, np.full(len(cuts), -1, np.int64)])
    if problem.theta_lower is None:
        covered = {c.scenario for c in cuts}
        if -1 not in covered and len(covered) < S:
            raise MasterUnbounded(
                "no theta lower bound and some scenarios have no cut")
        th_lo = np.full(S, -np.inf)
    else:
        th_lo = problem.theta_lower
    lower = np.concatenate([fs.lower, th_lo])
    upper = np.concatenate([fs.upper, np.full(S, np.inf)])
    c = np.concatenate([problem.c, p])
    lp = LinearProgram(c, A, senses, rhs, lower, upper)
    return MixedIntegerProgram(lp, problem.integer_vars)


def build_and_solve_master(state: BendersState, problem: TwoStageProblem,
                           time_limit_s: float = np.inf,
                           timing: str = "wallclock",
                           gap_tol: float = 0.0) -> MasterResult:
    """Solve the master over the pooled cuts; its optimum is a lower bound.

    Raises
    ------
    MasterUnbounded
        When some scenario's ``theta`` is neither cut nor bounded below.
    MasterTimeLimit
        When the MIP stops on time without any feasible point.
    """
    mip = _master_program(problem, state.cuts)
    start = time.perf_counter()
    sol = solve_mip(mip, time_limit_s, gap_tol)
    elapsed = time.perf_counter() - start
    if sol.status is MipStatus.UNBOUNDED:
        raise MasterUnbounded("master relaxation is unbounded")
    if sol.primal is None:
        if sol.status is MipStatus.TIME_LIMIT:
            raise MasterTimeLimit("master timed out without an incumbent")
        raise RuntimeError("master problem is infeasible")
    if timing == "proxy":
        elapsed = work_seconds(sol.simplex_iterations, sol.nodes_explored)
    n1 = problem.n1
    return MasterResult(sol.primal[:n1], sol.primal[n1:], sol.best_bound,
                        elapsed, sol.nodes_explored, sol.simplex_iterations)


def _solve_one(scenario, x):
    rhs = scenario.h - scenario.T @ x
    sol = _solve_arrays(scenario.q, scenario.W, scenario.senses, rhs,
                        np.zeros(scenario.q.size),
                        np.full(scenario.q.size, np.inf))
    if sol.status is not LpStatus.OPTIMAL:
        raise SubproblemInfeasible(
            f"recourse LP is {sol.status.value} at the given first stage")
    return sol, float(rhs @ sol.duals)


def solve_subproblems(problem: TwoStageProblem, x: np.ndarray,
                      workers: int | None = None) -> SubproblemResult:
    """Solve every scenario's recourse LP at ``x``.

    With ``workers > 1`` scenarios run on a thread pool (the simplex kernel
    releases the GIL); results are always ordered by scenario index.
    """
    x = np.asarray(x, dtype=float)
    if workers and workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            out = list(pool.map(lambda s: _solve_one(s, x),
                                problem.scenarios))
    else:
        out = [_solve_one(s, x) for s in problem.scenarios]
    kappa = np.array([s.kappa for s in problem.scenarios])
    duals = np.array([sol.duals for sol, _ in out])
    values = np.array([sol.objective for sol, _ in out]) + kappa
    dual_values = np.array([d for _, d in out]) + kappa
    pivots = sum(sol.iterations for sol, _ in out)
    return SubproblemResult(duals, values, dual_values, pivots, kappa)


def compute_bounds(lb: float, ub_best: float, problem: TwoStageProblem,
                   x: np.ndarray, values: np.ndarray):
    """Return ``(ub_raw, ub_best, gap, gap_raw)`` for the point ``x``.

    ``ub_raw`` is the objective of ``x`` this iteration and feeds the state
    features; the running minimum ``ub_best`` drives termination.
    """
    ub_raw = float(problem.c @ x + problem.probabilities @ values)
    ub_best = min(ub_best, ub_raw)
    return ub_raw, ub_best, gap(ub_best, lb), gap(ub_raw, lb)


def make_cuts(problem: TwoStageProblem, duals: np.ndarray, t: int) -> list:
    """One optimality cut per scenario from the subproblem multipliers."""
    cuts = []
    for w, (sc, pi) in enumerate(zip(problem.scenarios, duals)):
        cuts.append(Cut(w, float(pi @ sc.h + sc.kappa), pi @ sc.T, t, pi))
    return cuts


def aggregate_cut(cuts, probabilities, t: int) -> Cut:
    """Probability-weighted combination of one cut per scenario."""
    intercept = float(sum(p * c.intercept for p, c in zip(probabilities, cuts)))
    coeffs = sum(p * c.coeffs for p, c in zip(probabilities, cuts))
    return Cut(-1, intercept, np.asarray(coeffs, dtype=float), t)


def _violation_tol(values):
    return VIOLATION_TOL * (1.0 + np.abs(values))


class SelectAll:
    """Multi-cut: add every candidate that is violated at the master point."""

    aggregate = False
    name = "multi_cut"

    def select(self, state: BendersState) -> list:
        tol = _violation_tol(state.recourse)
        return [int(w) for w in np.flatnonzero(state.violations > tol)]


class Aggregate:
    """Single-cut: add the probability-weighted aggregate when violated."""

    aggregate = True
    name = "single_cut"

    def select(self, state: BendersState) -> list:
        p = state.problem.probabilities
        v = float(p @ state.violations)
        if v > VIOLATION_TOL * (1.0 + abs(float(p @ state.recourse))):
            return list(range(state.problem.n_scenarios))
        return []


class RandomK:
    """Uniformly random subset of ``k`` scenarios each iteration."""

    aggregate = False
    name = "random_k"

    def __init__(self, k: int, seed: int = 0):
        if k < 1:
            raise ValueError("k must be positive")
        self.k = k
        self.rng = make_rng(seed)

    def select(self, state: BendersState) -> list:
        S = state.problem.n_scenarios
        return [int(w) for w in
                self.rng.choice(S, size=min(self.k, S), replace=False)]


class BendersRun:
    """Step-wise Benders driver shared by :func:`run_benders` and training.

    ``advance`` solves the master and all subproblems of the next iteration;
    ``add`` pushes a selection of that iteration's candidates into the pool.
    """

    def __init__(self, problem: TwoStageProblem, eps_tol: float = 0.01,
                 t_max: int = 500, time_limit_s: float = np.inf,
                 timing: str = "wallclock", master_gap_tol: float = 0.0,
                 dedup: bool = False, workers: int | None = None):
        if timing not in ("wallclock", "proxy"):
            raise ValueError(f"unknown timing mode {timing!r}")
        self.problem = problem
        self.state = BendersState(problem)
        self.eps_tol = eps_tol
        self.t_max = t_max
        self.time_limit_s = time_limit_s
        self.timing = timing
        self.master_gap_tol = master_gap_tol
        self.dedup = dedup
        self.workers = workers
        self._start = time.perf_counter()
        self._seen = set()
        self.elapsed = 0.0
        self.master_total = 0.0

    def _remaining(self):
        return self.time_limit_s - (time.perf_counter() - self._start)

    @property
    def timed_out(self) -> bool:
        return self._remaining() <= 0

    @property
    def converged(self) -> bool:
        st = self.state
        if st.t == 0:
            return False
        if st.gap < self.eps_tol:
            return True
        return not np.any(st.violations > _violation_tol(st.recourse))

    @property
    def finished(self) -> bool:
        return (self.converged or self.state.t >= self.t_max
                or self.timed_out)

    def advance(self) -> BendersState:
        st, problem = self.state, self.problem
        t_wall = time.perf_counter()
        master = build_and_solve_master(st, problem, max(self._remaining(), 0),
                                        self.timing, self.master_gap_tol)
        t_sub = time.perf_counter()
        sub = solve_subproblems(problem, master.x, self.workers)
        sub_time = time.perf_counter() - t_sub
        if self.timing == "proxy":
            sub_time = work_seconds(sub.pivots)

        st.t += 1
        st.x_hat, st.theta_hat = master.x, master.theta
        st.lb = max(st.lb, master.lb)
        ub_raw, ub_best, g, g_raw = compute_bounds(st.lb, st.ub, problem,
                                                   master.x, sub.values)
        if ub_raw <= ub_best:
            st.best_x = master.x.copy()
        st.ub, st.ub_raw, st.gap, st.gap_raw = ub_best, ub_raw, g, g_raw
        st.recourse = sub.values
        st.master_time = master.solve_time
        st.candidates = make_cuts(problem, sub.duals, st.t)
        st.violations = np.array(
            [c.value(master.x) for c in st.candidates]) - master.theta
        st.duality_residuals.append(sub.duality_residuals)

        if self.timing == "proxy":
            self.elapsed += master.solve_time + sub_time
        else:
            self.elapsed += time.perf_counter() - t_wall
        self.master_total += master.solve_time
        st.history.append(IterationRecord(
            st.t, st.lb, st.ub, ub_raw, g, g_raw, master.solve_time, sub_time,
            0, st.cum_cuts, (), master.nodes, master.pivots))
        return st

    def add(self, selection, aggregate: bool = False) -> int:
        """Add the selected candidates (or their aggregate); return count."""
        st = self.state
        selection = [int(w) for w in selection]
        if aggregate:
            new = [aggregate_cut(st.candidates, self.problem.probabilities,
                                 st.t)] if selection else []
        else:
            new = [st.candidates[w] for w in selection]
        added = 0
        for cut in new:
            if self.dedup:
                key = (cut.scenario, round(cut.intercept, 9),
                       tuple(np.round(cut.coeffs, 9)))
                if key in self._seen:
                    continue
                self._seen.add(key)
            st.cuts.append(cut)
            added += 1
        for w in selection:
            if not aggregate:
                st.nc[w] += 1
        rec = st.history[-1]
        rec.cuts_added = added
        rec.selected = tuple(selection)
        return added


@dataclass
class BendersResult:
    x: np.ndarray
    objective: float
    state: BendersState
    trace: list
    status: str
    elapsed: float
    master_time: float

    @property
    def iterations(self) -> int:
        return self.state.t

    @property
    def gap(self) -> float:
        return self.state.gap

    @property
    def master_cuts(self) -> int:
        """Cuts present in the master at its final solve."""
        return self.trace[-1].cum_cuts if self.trace else 0


def run_benders(problem: TwoStageProblem, selector, eps_tol: float = 0.01,
                t_max: int = 500, time_limit_s: float = np.inf,
                timing: str = "wallclock", **kwargs) -> BendersResult:
    """Run Benders decomposition until the gap closes or a limit is hit.

    Parameters
    ----------
    problem : TwoStageProblem
    selector
        Object with ``select(state) -> list[int]`` and an ``aggregate`` flag,
        e.g. :class:`SelectAll`, :class:`Aggregate`, :class:`RandomK` or a
        policy-driven selector.
    eps_tol : float
        Relative gap ``(UB - LB) / (|UB| + 1e-8)`` at which to stop.
    t_max : int
        Iteration cap.
    time_limit_s : float
        Wall-clock budget.
    timing : {'wallclock', 'proxy'}
        How master and total solve time are measured.

    Returns
    -------
    BendersResult
        Incumbent with the best upper bound, final state, per-iteration
        trace and termination status (``converged``, ``iteration_limit`` or
        ``time_limit``).
    """
    run = BendersRun(problem, eps_tol, t_max, time_limit_s, timing, **kwargs)
    status = "iteration_limit"
    while True:
        try:
            run.advance()
        except MasterTimeLimit:
            if run.state.t == 0:
                raise
            status = "time_limit"
            break
        if run.converged:
            status = "converged"
            break
        if run.state.t >= t_max:
            break
        if run.timed_out:
            status = "time_limit"
            break
        run.add(selector.select(run.state), selector.aggregate)
    st = run.state
    return BendersResult(st.best_x, st.ub, st, st.history, status,
                         run.elapsed, run.master_total)


TRACE_HEADER = ["t", "LB", "UB", "Gap", "T_MP", "cuts_added", "cum_cuts",
                "selected"]


def write_trace_csv(trace, path) -> None:
    """One row per iteration; ``selected`` lists added scenarios by index."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_HEADER)
        for r in trace:
            w.writerow([r.t, repr(r.lb), repr(r.ub), repr(r.gap),
                        repr(r.master_time), r.cuts_added, r.cum_cuts,
                        ";".join(str(s) for s in r.selected)])
