"""Two-stage stochastic programs in standard form and the EV charging model.

A scenario's recourse value is

    Q(x) = kappa + min { q y : W y (senses) h - T x,  y >= 0 }

where ``kappa`` is a scenario constant (for the EV model, minus the revenue of
all realized demand). The first stage is ``min c x + sum_w p_w Q_w(x)`` over
the mixed-integer set described by ``first_stage``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .lp import LinearProgram, sense_codes
from .milp import MixedIntegerProgram

__all__ = [
    "Scenario",
    "TwoStageProblem",
    "EvInstance",
    "DemandShape",
    "make_rng",
    "generate_ev_instance",
    "generate_demand_scenarios",
    "make_ev_instance",
    "ev_to_standard_form",
    "recourse_lp",
    "save_instance",
    "load_instance",
    "PARAMETER_RANGES",
]

# Uniform sampling ranges of the EV model parameters.
PARAMETER_RANGES = {
    "f": (80.0, 300.0),
    "b": (5.0, 40.0),
    "c": (1.0, 80.0),
    "p": (30.0, 120.0),
    "r": (5.0, 60.0),
    "C": (40.0, 120.0),
    "M": (10, 80),
    "mu": (20.0, 100.0),
}
SIGMA_RATIO = 0.1
SKEW_SHAPE = 4.0


def make_rng(seed) -> np.random.Generator:
    """Counter-based Philox stream; reproduces bit-exactly across platforms."""
    return np.random.Generator(np.random.Philox(seed))


@dataclass(frozen=True)
class Scenario:
    W: np.ndarray
    h: np.ndarray
    T: np.ndarray
    q: np.ndarray
    probability: float
    kappa: float = 0.0
    senses: np.ndarray | None = None

    def __post_init__(self):
        rows = self.W.shape[0]
        if self.h.shape != (rows,) or self.T.shape[0] != rows:
            raise ValueError("scenario rows disagree")
        if self.q.shape != (self.W.shape[1],):
            raise ValueError("q must have one entry per recourse variable")
        if self.probability < 0:
            raise ValueError("negative scenario probability")
        if self.senses is None:
            object.__setattr__(self, "senses",
                               np.full(rows, -1, dtype=np.int64))


@dataclass
class TwoStageProblem:
    """Standard-form SAA instance.

    ``first_stage`` holds the rows and bounds of the first-stage feasible set
    (its objective is ``c``); ``integer_vars`` lists integral first-stage
    columns. ``theta_lower`` gives a valid lower bound on each scenario's
    recourse value, or ``None`` when no such bound is known.
    """

    c: np.ndarray
    first_stage: LinearProgram
    integer_vars: np.ndarray
    scenarios: list[Scenario]
    theta_lower: np.ndarray | None = None
    name: str = ""

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        if not self.scenarios:
            raise ValueError("at least one scenario is required")
        n2 = self.scenarios[0].W.shape[1]
        rows = self.scenarios[0].W.shape[0]
        for s in self.scenarios:
            if s.W.shape != (rows, n2) or s.T.shape != (rows, self.n1):
                raise ValueError("scenarios must share dimensions")
        total = sum(s.probability for s in self.scenarios)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"scenario probabilities sum to {total}")
        if self.theta_lower is not None:
            self.theta_lower = np.asarray(self.theta_lower, dtype=float)

    @property
    def n1(self) -> int:
        return self.c.size

    @property
    def n2(self) -> int:
        return self.scenarios[0].W.shape[1]

    @property
    def n_scenarios(self) -> int:
        return len(self.scenarios)

    @property
    def probabilities(self) -> np.ndarray:
        return np.array([s.probability for s in self.scenarios])

    def first_stage_mip(self) -> MixedIntegerProgram:
        return MixedIntegerProgram(self.first_stage, self.integer_vars)


def recourse_lp(scenario: Scenario, x: np.ndarray) -> LinearProgram:
    """Primal recourse LP of ``scenario`` at first-stage point ``x``."""
    return LinearProgram(scenario.q, scenario.W, scenario.senses,
                         scenario.h - scenario.T @ x)


class DemandShape:
    NORMAL = "normal"
    LEFT_SKEWED = "left_skewed"
    RIGHT_SKEWED = "right_skewed"
    ALL = (NORMAL, LEFT_SKEWED, RIGHT_SKEWED)


@dataclass
class EvInstance:
    """Parameters of the stochastic EV charging-station location model."""

    f: np.ndarray            # station opening cost, (I,)
    b: np.ndarray            # per-charger cost, (I,)
    c: np.ndarray            # transport cost, (I, J)
    p: np.ndarray            # unmet-demand penalty, (J,)
    r: np.ndarray            # revenue per served unit, (J,)
    C: np.ndarray            # capacity per charger, (I,)
    M: np.ndarray            # max chargers, (I,), integer
    mu: np.ndarray           # demand mean, (J,)
    sigma: np.ndarray        # demand std, (J,)
    demands: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    probabilities: np.ndarray = field(default_factory=lambda: np.zeros(0))
    seed: int | None = None
    shape: str = DemandShape.NORMAL

    @property
    def n_stations(self) -> int:
        return self.f.size

    @property
    def n_sites(self) -> int:
        return self.p.size

    @property
    def n_scenarios(self) -> int:
        return self.demands.shape[0]

    def with_demands(self, demands, shape=None) -> "EvInstance":
        demands = np.asarray(demands, dtype=float)
        n = demands.shape[0]
        return replace(self, demands=demands,
                       probabilities=np.full(n, 1.0 / n),
                       shape=shape or self.shape)

    def to_dict(self) -> dict:
        return {
            "format": "rlbd-ev-instance",
            "version": 1,
            "seed": self.seed,
            "n_stations": self.n_stations,
            "n_sites": self.n_sites,
            "n_scenarios": self.n_scenarios,
            "n1": 2 * self.n_stations,
            "n2": self.n_stations * self.n_sites + self.n_sites,
            "shape": self.shape,
            "f": self.f.tolist(),
            "b": self.b.tolist(),
            "c": self.c.tolist(),
            "p": self.p.tolist(),
            "r": self.r.tolist(),
            "C": self.C.tolist(),
            "M": [int(v) for v in self.M],
            "mu": self.mu.tolist(),
            "sigma": self.sigma.tolist(),
            "demands": self.demands.tolist(),
            "probabilities": self.probabilities.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvInstance":
        if d.get("format") != "rlbd-ev-instance":
            raise ValueError("not an EV instance document")
        J = int(d["n_sites"])
        demands = np.asarray(d["demands"], dtype=float).reshape(-1, J)
        return cls(
            f=np.asarray(d["f"], float), b=np.asarray(d["b"], float),
            c=np.asarray(d["c"], float).reshape(-1, J),
            p=np.asarray(d["p"], float), r=np.asarray(d["r"], float),
            C=np.asarray(d["C"], float), M=np.asarray(d["M"], np.int64),
            mu=np.asarray(d["mu"], float), sigma=np.asarray(d["sigma"], float),
            demands=demands,
            probabilities=np.asarray(d["probabilities"], float),
            seed=d.get("seed"), shape=d.get("shape", DemandShape.NORMAL))


def generate_ev_instance(seed: int, n_stations: int,
                         n_sites: int) -> EvInstance:
    """Sample EV model parameters uniformly from their ranges.

    ``M`` is drawn as an integer; demand means ``mu`` come from [20, 100] with
    ``sigma = 0.1 * mu``. No scenarios are attached (see
    :func:`generate_demand_scenarios` and :func:`make_ev_instance`).
    """
    if n_stations < 1 or n_sites < 1:
        raise ValueError("need at least one station and one site")
    rng = make_rng(seed)
    R = PARAMETER_RANGES
    I, J = n_stations, n_sites
    f = rng.uniform(*R["f"], size=I)
    b = rng.uniform(*R["b"], size=I)
    c = rng.uniform(*R["c"], size=(I, J))
    p = rng.uniform(*R["p"], size=J)
    r = rng.uniform(*R["r"], size=J)
    C = rng.uniform(*R["C"], size=I)
    M = rng.integers(R["M"][0], R["M"][1] + 1, size=I)
    mu = rng.uniform(*R["mu"], size=J)
    return EvInstance(f, b, c, p, r, C, M, mu, SIGMA_RATIO * mu,
                      demands=np.zeros((0, J)), seed=seed)


def _skewnorm_standard(rng, shape, size):
    """Skew-normal draws rescaled to zero mean and unit variance."""
    delta = shape / np.sqrt(1.0 + shape**2)
    u = np.abs(rng.standard_normal(size))
    v = rng.standard_normal(size)
    z = delta * u + np.sqrt(1.0 - delta**2) * v
    mean = delta * np.sqrt(2.0 / np.pi)
    std = np.sqrt(1.0 - 2.0 * delta**2 / np.pi)
    return (z - mean) / std


def generate_demand_scenarios(seed: int, instance: EvInstance,
                              n_scenarios: int,
                              shape: str = DemandShape.NORMAL) -> np.ndarray:
    """Draw an ``(n_scenarios, J)`` demand matrix.

    ``normal`` samples N(mu, sigma^2); the skewed shapes use a skew-normal
    with shape -4 (left) or +4 (right) whose mean and standard deviation are
    matched to (mu, sigma). Negative draws are clamped to zero.
    """
    if n_scenarios < 1:
        raise ValueError("n_scenarios must be positive")
    rng = make_rng(seed)
    size = (n_scenarios, instance.n_sites)
    if shape == DemandShape.NORMAL:
        z = rng.standard_normal(size)
    elif shape == DemandShape.LEFT_SKEWED:
        z = _skewnorm_standard(rng, -SKEW_SHAPE, size)
    elif shape == DemandShape.RIGHT_SKEWED:
        z = _skewnorm_standard(rng, SKEW_SHAPE, size)
    else:
        raise ValueError(f"unknown demand shape {shape!r}")
    return np.maximum(instance.mu + instance.sigma * z, 0.0)


def make_ev_instance(seed: int, n_stations: int, n_sites: int,
                     n_scenarios: int, shape: str = DemandShape.NORMAL,
                     demand_seed: int | None = None) -> EvInstance:
    inst = generate_ev_instance(seed, n_stations, n_sites)
    d = generate_demand_scenarios(seed if demand_seed is None else demand_seed,
                                  inst, n_scenarios, shape)
    return inst.with_demands(d, shape)


def ev_to_standard_form(inst: EvInstance) -> TwoStageProblem:
    """Compile an EV instance into a :class:`TwoStageProblem`.

    First stage ``x = (y_1..y_I, z_1..z_I)`` with ``z_i <= M_i y_i``, binary
    ``y`` and integer ``z``. Recourse variables are ``x_ij`` (row-major in
    ``i``) followed by the unmet demands ``u_j``. Rows: ``J`` demand
    equalities ``sum_i x_ij + u_j = d_j``, then ``I`` capacity rows
    ``-sum_j x_ij >= -C_i z_i`` (so ``T[J+i, I+i] = C_i``).
    """
    if inst.n_scenarios == 0:
        raise ValueError("instance has no demand scenarios")
    I, J = inst.n_stations, inst.n_sites
    n1 = 2 * I
    c1 = np.concatenate([inst.f, inst.b])
    A1 = np.zeros((I, n1))
    A1[np.arange(I), np.arange(I)] = -inst.M
    A1[np.arange(I), I + np.arange(I)] = 1.0
    upper = np.concatenate([np.ones(I), inst.M.astype(float)])
    first = LinearProgram(c1, A1, ["<="] * I, np.zeros(I), np.zeros(n1), upper)

    n2 = I * J + J
    W = np.zeros((J + I, n2))
    for i in range(I):
        for j in range(J):
            W[j, i * J + j] = 1.0
            W[J + i, i * J + j] = -1.0
    W[np.arange(J), I * J + np.arange(J)] = 1.0
    T = np.zeros((J + I, n1))
    T[J + np.arange(I), I + np.arange(I)] = inst.C
    q = np.concatenate([inst.c.ravel(), inst.p])
    senses = sense_codes(["="] * J + [">="] * I)
    W.flags.writeable = False
    T.flags.writeable = False
    q.flags.writeable = False

    scenarios = []
    kappas = -(inst.demands @ inst.r)
    for d, prob, kappa in zip(inst.demands, inst.probabilities, kappas):
        h = np.concatenate([d, np.zeros(I)])
        scenarios.append(Scenario(W, h, T, q, float(prob), float(kappa),
                                  senses))
    return TwoStageProblem(c1, first, np.arange(n1), scenarios,
                           theta_lower=kappas.copy(),
                           name=f"ev-{I}x{J}-{inst.n_scenarios}")


def save_instance(inst: EvInstance, path) -> None:
    path = Path(path)
    path.write_text(json.dumps(inst.to_dict(), indent=1, sort_keys=True) + "\n")


def load_instance(path) -> EvInstance:
    return EvInstance.from_dict(json.loads(Path(path).read_text()))
