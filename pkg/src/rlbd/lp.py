"""Linear programming: problem container, solution record and ``solve_lp``.

Dual sign convention (minimization): a multiplier of a ``>=`` row is
nonnegative, of a ``<=`` row nonpositive, of an ``=`` row free, so that
``c - A^T y`` are the reduced costs and ``b^T y`` plus the bound terms of the
reduced costs equals the optimal objective.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import _simplex

__all__ = [
    "Tolerances",
    "TOL",
    "LpStatus",
    "LinearProgram",
    "LpSolution",
    "NumericalFailure",
    "solve_lp",
    "sense_codes",
]


@dataclass(frozen=True)
class Tolerances:
    feasibility: float = 1e-9
    duality: float = 1e-7
    pivot: float = 1e-10
    optimality: float = 1e-9
    integrality: float = 1e-6
    bland_after: int = 1000
    iteration_factor: int = 50
    method: str = "auto"  # 'auto', 'primal' or 'dual'


TOL = Tolerances()


class LpStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


class NumericalFailure(RuntimeError):
    """Pivoting stalled beyond the iteration cap."""


_METHODS = {"auto": 0, "primal": 1, "dual": 2}
_SENSES = {"<=": 1, "L": 1, ">=": -1, "G": -1, "=": 0, "==": 0, "E": 0}


def sense_codes(senses) -> np.ndarray:
    """Map sense strings (``'<='``, ``'>='``, ``'='``) to kernel codes."""
    if isinstance(senses, np.ndarray) and senses.dtype.kind == "i":
        return senses.astype(np.int64)
    try:
        return np.array([_SENSES[s] for s in senses], dtype=np.int64)
    except KeyError as exc:
        raise ValueError(f"unknown constraint sense {exc.args[0]!r}") from None


@dataclass
class LinearProgram:
    """``min c x  s.t.  A x (senses) rhs,  lower <= x <= upper``."""

    c: np.ndarray
    A: np.ndarray
    senses: np.ndarray
    rhs: np.ndarray
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        self.A = np.asarray(self.A, dtype=float).reshape(-1, n)
        self.rhs = np.asarray(self.rhs, dtype=float).ravel()
        self.senses = sense_codes(self.senses)
        if self.lower is None:
            self.lower = np.zeros(n)
        if self.upper is None:
            self.upper = np.full(n, np.inf)
        self.lower = np.asarray(self.lower, dtype=float).ravel().copy()
        self.upper = np.asarray(self.upper, dtype=float).ravel().copy()
        m = self.A.shape[0]
        if self.rhs.size != m or self.senses.size != m:
            raise ValueError("rows of A, senses and rhs disagree")
        if self.lower.size != n or self.upper.size != n:
            raise ValueError("bound vectors must match the objective length")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")

    @property
    def shape(self):
        return self.A.shape


@dataclass
class LpSolution:
    status: LpStatus
    primal: np.ndarray
    duals: np.ndarray
    objective: float
    reduced_costs: np.ndarray = field(default_factory=lambda: np.zeros(0))
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL

    def dual_objective(self, lp: LinearProgram) -> float:
        """``rhs^T y`` plus the reduced-cost contribution of active bounds."""
        val = float(lp.rhs @ self.duals)
        d = self.reduced_costs
        for j in np.flatnonzero(np.abs(d) > 0):
            if d[j] > 0 and np.isfinite(lp.lower[j]):
                val += d[j] * lp.lower[j]
            elif d[j] < 0 and np.isfinite(lp.upper[j]):
                val += d[j] * lp.upper[j]
        return val


def _solve_arrays(c, A, senses, rhs, lower, upper, tol=TOL):
    m, n = A.shape
    max_iter = tol.iteration_factor * (m + n)
    status, x, y, it = _simplex.solve_dense(
        A, senses, rhs, c, lower, upper, max_iter, tol.feasibility,
        tol.optimality, tol.pivot, tol.bland_after, _METHODS[tol.method])
    if status == _simplex.ITERATION_LIMIT:
        raise NumericalFailure(
            f"simplex exceeded {max_iter} iterations on a {m}x{n} LP")
    if status == _simplex.INFEASIBLE:
        return LpSolution(LpStatus.INFEASIBLE, x, y, np.inf, iterations=it)
    if status == _simplex.UNBOUNDED:
        return LpSolution(LpStatus.UNBOUNDED, x, y, -np.inf, iterations=it)
    d = c - A.T @ y
    return LpSolution(LpStatus.OPTIMAL, x, y, float(c @ x), d, it)


def solve_lp(lp: LinearProgram, tol: Tolerances = TOL) -> LpSolution:
    """Solve ``lp`` with the bounded revised simplex method.

    When every column can sit at a bound whose reduced cost sign is right
    (e.g. nonnegative costs over finite lower bounds) the all-slack basis is
    dual feasible and the dual simplex runs from it; otherwise a two-phase
    primal simplex with artificial columns is used. Both price by largest
    violation and switch to Bland's rule after 1000 degenerate pivots.

    Parameters
    ----------
    lp : LinearProgram
        Problem to solve; the instance is not modified.
    tol : Tolerances, optional
        Solver tolerances.

    Returns
    -------
    LpSolution
        Status, primal vector, one dual per row, objective, reduced costs and
        the number of simplex pivots performed.

    Raises
    ------
    NumericalFailure
        If pivoting does not finish within ``50 * (rows + cols)`` pivots.
    """
    return _solve_arrays(lp.c, lp.A, lp.senses, lp.rhs, lp.lower, lp.upper,
                         tol)
