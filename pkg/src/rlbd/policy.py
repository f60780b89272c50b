"""Shared-MLP cut scorer, without-replacement sampling and its exact gradient.

A candidate's logit is ``W3 relu(W2 relu(W1 s + b1) + b2) + b3``. Cuts are
drawn one at a time from the softmax over the candidates not yet taken, so
the log-probability of an ordered draw ``(a_1, ..., a_K)`` is

    sum_i  z_{a_i} - logsumexp(z over candidates not among a_1..a_{i-1})

which equals ``sum_i log(pi(a_i) / (1 - sum_{j<i} pi(a_j)))``.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .benders import VIOLATION_TOL, BendersState
from .features import NORMALIZATIONS, STATE_DIM, build_state
from .model import make_rng

__all__ = [
    "PolicyParams",
    "ActionSample",
    "forward",
    "softmax",
    "log_softmax",
    "sample_without_replacement",
    "sequence_log_prob",
    "greedy_top_k",
    "logprob_gradient",
    "save_checkpoint",
    "load_checkpoint",
    "PolicyStochastic",
    "PolicyGreedy",
]

LAYERS = ("W1", "b1", "W2", "b2", "W3", "b3")
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class PolicyParams:
    """MLP weights (``W`` maps inputs to outputs, shape ``(out, in)``)."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    W3: np.ndarray
    b3: np.ndarray
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0

    @classmethod
    def init(cls, input_dim: int = STATE_DIM, hidden=(64, 64),
             seed: int = 0) -> "PolicyParams":
        """Uniform ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]`` initialization."""
        rng = make_rng(seed)
        sizes = (input_dim, *hidden, 1)
        arrays = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = np.sqrt(1.0 / fan_in)
            arrays.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
            arrays.append(rng.uniform(-bound, bound, size=fan_out))
        return cls(*arrays)

    @classmethod
    def zeros(cls, input_dim: int = STATE_DIM, hidden=(64, 64)):
        sizes = (input_dim, *hidden, 1)
        arrays = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            arrays += [np.zeros((fan_out, fan_in)), np.zeros(fan_out)]
        return cls(*arrays)

    @property
    def input_dim(self) -> int:
        return self.W1.shape[1]

    @property
    def hidden(self) -> tuple:
        return (self.W1.shape[0], self.W2.shape[0])

    def arrays(self) -> dict:
        return {k: getattr(self, k) for k in LAYERS}

    def copy(self) -> "PolicyParams":
        return PolicyParams(
            *(getattr(self, k).copy() for k in LAYERS),
            m={k: a.copy() for k, a in self.m.items()},
            v={k: a.copy() for k, a in self.v.items()}, step=self.step)

    def flat(self) -> np.ndarray:
        return np.concatenate([getattr(self, k).ravel() for k in LAYERS])

    def set_flat(self, theta: np.ndarray) -> None:
        pos = 0
        for k in LAYERS:
            a = getattr(self, k)
            a[...] = theta[pos:pos + a.size].reshape(a.shape)
            pos += a.size

    def adam_ascent(self, grad: dict, lr: float) -> None:
        """One Adam step in the direction of ``grad`` (maximization)."""
        self.step += 1
        c1 = 1.0 - ADAM_BETA1 ** self.step
        c2 = 1.0 - ADAM_BETA2 ** self.step
        for k in LAYERS:
            g = grad[k]
            m = self.m.get(k, np.zeros_like(g))
            v = self.v.get(k, np.zeros_like(g))
            m = ADAM_BETA1 * m + (1.0 - ADAM_BETA1) * g
            v = ADAM_BETA2 * v + (1.0 - ADAM_BETA2) * g * g
            self.m[k], self.v[k] = m, v
            if lr != 0.0:
                getattr(self, k)[...] += lr * (m / c1) / (np.sqrt(v / c2)
                                                         + ADAM_EPS)


@dataclass
class ActionSample:
    indices: tuple
    log_prob: float
    step_probs: tuple  # renormalized probability of each draw


def _layers(params: PolicyParams, X):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    a1 = X @ params.W1.T + params.b1
    h1 = np.maximum(a1, 0.0)
    a2 = h1 @ params.W2.T + params.b2
    h2 = np.maximum(a2, 0.0)
    z = h2 @ params.W3[0] + params.b3[0]
    return X, a1, h1, a2, h2, z


def forward(params: PolicyParams, X) -> np.ndarray:
    """One logit per row of ``X`` (shape ``(n_candidates, input_dim)``)."""
    return _layers(params, X)[-1]


def log_softmax(z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    s = z - z.max()
    return s - np.log(np.exp(s).sum())


def softmax(z) -> np.ndarray:
    """Probabilities from logits, shifted by the max for stability."""
    z = np.asarray(z, dtype=float)
    e = np.exp(z - z.max())
    return e / e.sum()


def _draw_log_prob(probs, order):
    remaining = np.ones(len(probs), dtype=bool)
    logp = 0.0
    steps = []
    for a in order:
        mass = probs[remaining].sum()
        q = probs[a] / mass
        steps.append(float(q))
        logp += np.log(q)
        remaining[a] = False
    return float(logp), tuple(steps)


def sample_without_replacement(probs, k: int, rng) -> ActionSample:
    """Draw ``k`` distinct indices sequentially from renormalized ``probs``.

    With ``k >= len(probs)`` every index is returned, most probable first
    (ties to the lower index).
    """
    probs = np.asarray(probs, dtype=float)
    n = probs.size
    if k < 1:
        raise ValueError("k must be positive")
    if k >= n:
        order = [int(i) for i in np.argsort(-probs, kind="stable")]
    else:
        remaining = np.ones(n, dtype=bool)
        order = []
        for _ in range(k):
            cand = np.flatnonzero(remaining)
            w = probs[cand]
            cdf = np.cumsum(w)
            u = rng.random() * cdf[-1]
            pos = min(int(np.searchsorted(cdf, u, side="right")),
                      cand.size - 1)
            a = int(cand[pos])
            order.append(a)
            remaining[a] = False
    logp, steps = _draw_log_prob(probs, order)
    return ActionSample(tuple(order), logp, steps)


def sequence_log_prob(z, order) -> float:
    """Log-probability of an ordered draw, computed from logits."""
    z = np.asarray(z, dtype=float)
    remaining = np.ones(z.size, dtype=bool)
    total = 0.0
    for a in order:
        total += log_softmax(z[remaining])[np.flatnonzero(remaining) == a][0]
        remaining[a] = False
    return float(total)


def greedy_top_k(logits, k: int) -> tuple:
    """Indices of the ``k`` largest logits, ties to the lower index."""
    order = np.argsort(-np.asarray(logits, dtype=float), kind="stable")
    return tuple(int(i) for i in order[:k])


def _dlogp_dz(z, order) -> np.ndarray:
    g = np.zeros(z.size)
    remaining = np.ones(z.size, dtype=bool)
    for a in order:
        idx = np.flatnonzero(remaining)
        g[idx] -= softmax(z[idx])
        g[a] += 1.0
        remaining[a] = False
    return g


def logprob_gradient(params: PolicyParams, steps) -> dict:
    """Gradient of ``sum_t G_t log P(A_t | s_t)`` with respect to the weights.

    Parameters
    ----------
    params : PolicyParams
    steps : iterable of (X, order, weight)
        ``X`` holds the candidate states of one step, ``order`` the sampled
        indices and ``weight`` the return ``G_t``.

    Returns
    -------
    dict
        One array per layer name, shaped like the weights.
    """
    grad = {k: np.zeros_like(getattr(params, k)) for k in LAYERS}
    for X, order, weight in steps:
        if weight == 0.0:
            continue
        X, a1, h1, a2, h2, z = _layers(params, X)
        dz = weight * _dlogp_dz(z, order)
        grad["W3"][0] += dz @ h2
        grad["b3"][0] += dz.sum()
        d2 = np.outer(dz, params.W3[0]) * (a2 > 0)
        grad["W2"] += d2.T @ h1
        grad["b2"] += d2.sum(0)
        d1 = (d2 @ params.W2) * (a1 > 0)
        grad["W1"] += d1.T @ X
        grad["b1"] += d1.sum(0)
    return grad


def _encode(a: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(a, "<f8").tobytes()).decode()


def _decode(s: str, shape) -> np.ndarray:
    return np.frombuffer(base64.b64decode(s), "<f8").reshape(shape).copy()


def save_checkpoint(params: PolicyParams, path, normalization="signed_log",
                    t_max: int = 500, meta: dict | None = None) -> None:
    """Write weights and optimizer state as JSON (base64 little-endian f8)."""
    doc = {
        "format": "rlbd-policy",
        "version": 1,
        "input_dim": params.input_dim,
        "hidden": list(params.hidden),
        "normalization": normalization,
        "t_max": t_max,
        "layers": {k: {"shape": list(a.shape), "data": _encode(a)}
                   for k, a in params.arrays().items()},
        "adam": {"step": params.step,
                 "m": {k: _encode(a) for k, a in params.m.items()},
                 "v": {k: _encode(a) for k, a in params.v.items()}},
        "meta": meta or {},
    }
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def load_checkpoint(path):
    """Return ``(params, info)`` where ``info`` has normalization and t_max."""
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != "rlbd-policy":
        raise ValueError(f"{path} is not a policy checkpoint")
    shapes = {k: tuple(v["shape"]) for k, v in doc["layers"].items()}
    params = PolicyParams(*(_decode(doc["layers"][k]["data"], shapes[k])
                            for k in LAYERS))
    adam = doc.get("adam", {})
    params.step = int(adam.get("step", 0))
    params.m = {k: _decode(s, shapes[k]) for k, s in adam.get("m", {}).items()}
    params.v = {k: _decode(s, shapes[k]) for k, s in adam.get("v", {}).items()}
    info = {"normalization": doc["normalization"], "t_max": doc["t_max"],
            "meta": doc.get("meta", {})}
    if info["normalization"] not in NORMALIZATIONS:
        raise ValueError("unknown normalization in checkpoint")
    return params, info


class PolicyStochastic:
    """Sample ``k`` candidates from the policy; keeps the last draw."""

    aggregate = False
    name = "rlbd_stochastic"

    def __init__(self, params: PolicyParams, k: int, seed: int = 0,
                 t_max: int = 500, normalization: str = "signed_log"):
        self.params = params
        self.k = k
        self.rng = make_rng(seed)
        self.t_max = t_max
        self.normalization = normalization
        self.last_states = None
        self.last_sample = None

    def select(self, state: BendersState) -> list:
        X = build_state(state, t_max=self.t_max, mode=self.normalization)
        probs = softmax(forward(self.params, X))
        self.last_states = X
        self.last_sample = sample_without_replacement(probs, self.k, self.rng)
        return list(self.last_sample.indices)


class PolicyGreedy:
    """Deterministic rollout: the ``k`` highest-logit candidates.

    With ``violated_only`` (the default) the ranking is restricted to
    candidates violated at the master point, so every iteration changes the
    master; otherwise all candidates are ranked.
    """

    aggregate = False
    name = "rlbd_greedy"

    def __init__(self, params: PolicyParams, k: int, t_max: int = 500,
                 normalization: str = "signed_log",
                 violated_only: bool = True):
        self.params = params
        self.k = k
        self.t_max = t_max
        self.normalization = normalization
        self.violated_only = violated_only

    def select(self, state: BendersState) -> list:
        X = build_state(state, t_max=self.t_max, mode=self.normalization)
        z = forward(self.params, X)
        if not self.violated_only:
            return list(greedy_top_k(z, self.k))
        tol = VIOLATION_TOL * (1.0 + np.abs(state.recourse))
        live = np.flatnonzero(state.violations > tol)
        return [int(live[i]) for i in greedy_top_k(z[live], self.k)]
