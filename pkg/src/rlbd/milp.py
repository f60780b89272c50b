"""Best-bound branch-and-bound over LP relaxations."""

from __future__ import annotations

import enum
import heapq
import itertools
import time
from dataclasses import dataclass

import numpy as np

from .lp import TOL, LinearProgram, LpStatus, Tolerances, _solve_arrays

__all__ = ["MipStatus", "MixedIntegerProgram", "MipSolution", "solve_mip",
           "relative_gap", "extensive_form", "solve_extensive_form"]


class MipStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    TIME_LIMIT = "time_limit"
    UNBOUNDED = "unbounded"


@dataclass
class MixedIntegerProgram:
    base: LinearProgram
    integer_vars: np.ndarray

    def __post_init__(self):
        self.integer_vars = np.unique(np.asarray(self.integer_vars,
                                                 dtype=np.int64))
        n = self.base.c.size
        if self.integer_vars.size and (self.integer_vars.min() < 0
                                       or self.integer_vars.max() >= n):
            raise ValueError("integer variable index out of range")
        iv = self.integer_vars
        if not (np.all(np.isfinite(self.base.lower[iv]))
                and np.all(np.isfinite(self.base.upper[iv]))):
            raise ValueError("integer variables need finite bounds")


@dataclass
class MipSolution:
    status: MipStatus
    primal: np.ndarray | None
    objective: float
    best_bound: float
    nodes_explored: int
    simplex_iterations: int = 0

    @property
    def gap(self) -> float:
        return relative_gap(self.objective, self.best_bound)


def relative_gap(incumbent: float, bound: float) -> float:
    if not np.isfinite(incumbent):
        return np.inf
    return max(incumbent - bound, 0.0) / max(abs(incumbent), 1e-10)


def solve_mip(mip: MixedIntegerProgram, time_limit_s: float = np.inf,
              gap_tol: float = 0.0, tol: Tolerances = TOL) -> MipSolution:
    """Solve a MILP by best-bound-first branch-and-bound.

    The branching variable is the most fractional integer column, ties going to
    the lowest index. Child relaxations are solved eagerly and queued by their
    own LP bound.

    Parameters
    ----------
    mip : MixedIntegerProgram
    time_limit_s : float
        Wall-clock budget; on expiry the incumbent and the smallest open bound
        are returned with status ``TIME_LIMIT``.
    gap_tol : float
        Relative gap ``(incumbent - bound) / |incumbent|`` at which the search
        stops and reports ``OPTIMAL``.

    Raises
    ------
    NumericalFailure
        Propagated from the LP solver.
    """
    if gap_tol < 0:
        raise ValueError("gap_tol must be nonnegative")
    lp = mip.base
    iv = mip.integer_vars
    start = time.perf_counter()
    counter = itertools.count()
    iterations = 0
    nodes = 0

    def relax(lower, upper):
        nonlocal iterations, nodes
        sol = _solve_arrays(lp.c, lp.A, lp.senses, lp.rhs, lower, upper, tol)
        iterations += sol.iterations
        nodes += 1
        return sol

    root = relax(lp.lower, lp.upper)
    if root.status is LpStatus.INFEASIBLE:
        return MipSolution(MipStatus.INFEASIBLE, None, np.inf, np.inf, nodes,
                           iterations)
    if root.status is LpStatus.UNBOUNDED:
        return MipSolution(MipStatus.UNBOUNDED, None, -np.inf, -np.inf, nodes,
                           iterations)

    heap = [(root.objective, next(counter), lp.lower, lp.upper, root.primal)]
    incumbent, inc_x = np.inf, None
    timed_out = False

    def prune_level():
        if not np.isfinite(incumbent):
            return np.inf
        return incumbent - max(gap_tol * abs(incumbent),
                               tol.feasibility * (1.0 + abs(incumbent)))

    while heap:
        bound, _, lower, upper, x = heap[0]
        if bound >= prune_level():
            break
        if time.perf_counter() - start > time_limit_s:
            timed_out = True
            break
        heapq.heappop(heap)
        xi = x[iv]
        frac = np.abs(xi - np.round(xi))
        if iv.size == 0 or frac.max() <= tol.integrality:
            if bound < incumbent:
                incumbent, inc_x = bound, x
            continue
        k = int(np.argmax(np.minimum(xi - np.floor(xi), np.ceil(xi) - xi)))
        j = iv[k]
        v = x[j]
        down_hi = upper.copy()
        down_hi[j] = np.floor(v)
        up_lo = lower.copy()
        up_lo[j] = np.ceil(v)
        for lo_c, hi_c in ((lower, down_hi), (up_lo, upper)):
            if lo_c[j] > hi_c[j]:
                continue
            child = relax(lo_c, hi_c)
            if child.status is LpStatus.OPTIMAL and \
                    child.objective < prune_level():
                heapq.heappush(heap, (child.objective, next(counter), lo_c,
                                      hi_c, child.primal))

    open_bound = heap[0][0] if heap else np.inf
    best_bound = min(open_bound, incumbent)
    if inc_x is None:
        status = MipStatus.TIME_LIMIT if timed_out else MipStatus.INFEASIBLE
        return MipSolution(status, None, np.inf,
                           best_bound if timed_out else np.inf, nodes,
                           iterations)
    x = inc_x.copy()
    x[iv] = np.round(x[iv])
    status = MipStatus.TIME_LIMIT if timed_out else MipStatus.OPTIMAL
    return MipSolution(status, x, float(lp.c @ x), best_bound, nodes,
                       iterations)


def extensive_form(problem):
    """Deterministic equivalent of a two-stage problem as one MILP.

    Columns are ``x`` followed by one recourse block per scenario; scenario
    rows are written as ``W y + T x (senses) h``. Returns the program and the
    constant ``sum_w p_w kappa_w`` to add to its objective.
    """
    fs = problem.first_stage
    n1, n2, S = problem.n1, problem.n2, problem.n_scenarios
    rows1 = fs.A.shape[0]
    rows2 = problem.scenarios[0].W.shape[0]
    n = n1 + S * n2
    A = np.zeros((rows1 + S * rows2, n))
    A[:rows1, :n1] = fs.A
    rhs = [fs.rhs]
    senses = [fs.senses]
    c = np.zeros(n)
    c[:n1] = problem.c
    lower = np.concatenate([fs.lower, np.zeros(S * n2)])
    upper = np.concatenate([fs.upper, np.full(S * n2, np.inf)])
    const = 0.0
    for k, sc in enumerate(problem.scenarios):
        r0 = rows1 + k * rows2
        c0 = n1 + k * n2
        A[r0:r0 + rows2, :n1] = sc.T
        A[r0:r0 + rows2, c0:c0 + n2] = sc.W
        rhs.append(sc.h)
        senses.append(sc.senses)
        c[c0:c0 + n2] = sc.probability * sc.q
        const += sc.probability * sc.kappa
    lp = LinearProgram(c, A, np.concatenate(senses), np.concatenate(rhs),
                       lower, upper)
    return MixedIntegerProgram(lp, problem.integer_vars), const


def solve_extensive_form(problem, time_limit_s: float = np.inf,
                         gap_tol: float = 0.0,
                         tol: Tolerances = TOL) -> MipSolution:
    """Solve the SAA problem directly; the reference value for decomposition.

    The returned ``objective`` and ``best_bound`` include the scenario
    constants, and ``primal`` holds only the first-stage columns.
    """
    mip, const = extensive_form(problem)
    sol = solve_mip(mip, time_limit_s, gap_tol, tol)
    x = None if sol.primal is None else sol.primal[:problem.n1]
    return MipSolution(sol.status, x, sol.objective + const,
                       sol.best_bound + const, sol.nodes_explored,
                       sol.simplex_iterations)
