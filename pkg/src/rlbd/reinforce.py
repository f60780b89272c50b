"""REINFORCE training of the cut-selection policy.

An episode is one Benders run. At step ``t`` the master and subproblems are
solved, the state is built, ``K`` candidates are sampled, the step reward is
computed from the gap change and master time of iteration ``t``, the cuts are
added, and the episode ends once the gap falls below ``eps_tol``.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .benders import BendersRun
from .features import STATE_DIM, FeatureDump, build_state
from .lp import NumericalFailure
from .model import make_rng
from .policy import (ActionSample, PolicyParams, forward,
                     logprob_gradient, sample_without_replacement,
                     save_checkpoint, softmax)

__all__ = [
    "GAP_FLOOR",
    "RewardConfig",
    "TrainConfig",
    "EpisodeStep",
    "EpisodeTrace",
    "step_reward",
    "returns_to_go",
    "BendersEnv",
    "BanditEnv",
    "run_episode",
    "TrainResult",
    "train",
    "CURVE_HEADER",
    "write_curves_csv",
]

log = logging.getLogger(__name__)

GAP_FLOOR = 1e-12


@dataclass(frozen=True)
class RewardConfig:
    alpha: float = 0.01
    beta: float = 0.001
    lam: float = 0.001
    t_ref: float = 0.1
    gamma: float = 0.99
    timing: str = "wallclock"

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        if self.t_ref <= 0:
            raise ValueError("t_ref must be positive")
        if self.timing not in ("wallclock", "proxy"):
            raise ValueError(f"unknown timing mode {self.timing!r}")


@dataclass(frozen=True)
class TrainConfig:
    k: int = 5
    t_max: int = 500
    episodes: int = 200
    lr: float = 1e-3
    eps_tol: float = 0.01
    seed: int = 0
    hidden: tuple = (64, 64)
    normalization: str = "signed_log"
    checkpoint_every: int = 0
    master_gap_tol: float = 0.0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if self.episodes < 1:
            raise ValueError("episodes must be at least 1")
        if self.t_max < 1:
            raise ValueError("t_max must be at least 1")


def step_reward(gap_prev: float | None, gap_now: float, master_time: float,
                cfg: RewardConfig) -> float:
    """``alpha * F + beta * L - lam`` for one step.

    ``F = log(gap_prev) - log(gap_now)`` with both gaps floored at 1e-12,
    and ``F = 0`` when there is no previous gap. ``L = -master_time / t_ref``.
    """
    if gap_prev is None:
        F = 0.0
    else:
        F = (np.log(max(gap_prev, GAP_FLOOR))
             - np.log(max(gap_now, GAP_FLOOR)))
    L = -master_time / cfg.t_ref
    return float(cfg.alpha * F + cfg.beta * L - cfg.lam)


def returns_to_go(rewards, gamma: float) -> np.ndarray:
    """``G_t = r_t + gamma * G_{t+1}`` with zero past the last reward."""
    rewards = np.asarray(rewards, dtype=float)
    if rewards.size == 0:
        raise ValueError("need at least one reward")
    G = np.empty_like(rewards)
    acc = 0.0
    for t in range(rewards.size - 1, -1, -1):
        acc = rewards[t] + gamma * acc
        G[t] = acc
    return G


@dataclass
class EpisodeStep:
    states: np.ndarray
    sample: ActionSample
    reward: float
    gap: float
    master_time: float


@dataclass
class EpisodeTrace:
    steps: list = field(default_factory=list)
    terminal: bool = False
    returns: np.ndarray | None = None
    final_gap: float = np.inf
    elapsed: float = 0.0
    master_cuts: int = 0

    @property
    def total_reward(self) -> float:
        return float(sum(s.reward for s in self.steps))

    def __len__(self):
        return len(self.steps)


class BendersEnv:
    """Benders run exposed as ``reset() -> states`` / ``step(a) -> ...``.

    ``problem`` may also be a sequence of problems; episodes then cycle
    through them in order.
    """

    def __init__(self, problem, rcfg: RewardConfig, tcfg: TrainConfig,
                 feature_dump: FeatureDump | None = None):
        self.problems = (list(problem) if isinstance(problem, (list, tuple))
                         else [problem])
        if not self.problems:
            raise ValueError("need at least one training problem")
        self.problem = self.problems[0]
        self.rcfg = rcfg
        self.tcfg = tcfg
        self.input_dim = STATE_DIM
        self.dump = feature_dump
        self.episode = 0
        self.run = None
        self._gap_prev = None

    def _observe(self):
        st = self.run.state
        if self.dump is not None:
            self.dump.write(self.episode, st.t, build_state(st, raw=True))
        return build_state(st, t_max=self.tcfg.t_max,
                           mode=self.tcfg.normalization)

    def reset(self) -> np.ndarray:
        self.episode += 1
        self.problem = self.problems[(self.episode - 1) % len(self.problems)]
        self.run = BendersRun(self.problem, self.tcfg.eps_tol,
                              self.tcfg.t_max, timing=self.rcfg.timing,
                              master_gap_tol=self.tcfg.master_gap_tol)
        self._gap_prev = None
        self.run.advance()
        return self._observe()

    @property
    def gap(self) -> float:
        return self.run.state.gap

    @property
    def master_time(self) -> float:
        return self.run.state.master_time

    def step(self, action):
        st = self.run.state
        r = step_reward(self._gap_prev, st.gap, st.master_time, self.rcfg)
        self._gap_prev = st.gap
        self.run.add(action)
        if self.run.converged or st.t >= self.tcfg.t_max:
            return r, True, None
        self.run.advance()
        return r, False, self._observe()

    def summary(self) -> dict:
        return {"final_gap": self.run.state.gap, "elapsed": self.run.elapsed,
                "master_cuts": self.run.state.cum_cuts}


class BanditEnv:
    """One-step environment: fixed candidate states, reward 1 for ``best``.

    Any other choice earns 0. The optimal policy puts all mass on ``best``.
    """

    def __init__(self, n_arms: int = 3, best: int = 2, seed: int = 0,
                 input_dim: int = STATE_DIM):
        self.states = make_rng(seed).standard_normal((n_arms, input_dim))
        self.best = best
        self.input_dim = input_dim
        self.gap = 0.0
        self.master_time = 0.0

    def reset(self) -> np.ndarray:
        return self.states.copy()

    def step(self, action):
        return (1.0 if self.best in action else 0.0), True, None

    def summary(self) -> dict:
        return {"final_gap": 0.0, "elapsed": 0.0, "master_cuts": 0}


def run_episode(env, params: PolicyParams, k: int, rng,
                gamma: float = 1.0) -> EpisodeTrace:
    """Roll out the stochastic policy in ``env`` until it reports done."""
    trace = EpisodeTrace()
    X = env.reset()
    done = False
    while not done:
        probs = softmax(forward(params, X))
        sample = sample_without_replacement(probs, k, rng)
        gap, mt = env.gap, env.master_time
        r, done, X_next = env.step(list(sample.indices))
        trace.steps.append(EpisodeStep(X, sample, r, gap, mt))
        X = X_next
    info = env.summary()
    trace.terminal = True
    trace.final_gap = info["final_gap"]
    trace.elapsed = info["elapsed"]
    trace.master_cuts = info["master_cuts"]
    trace.returns = returns_to_go([s.reward for s in trace.steps], gamma)
    return trace


CURVE_HEADER = ["episode", "total_reward", "steps", "final_gap",
                "elapsed_time"]


@dataclass
class TrainResult:
    params: PolicyParams
    curves: list
    discarded: int = 0


def write_curves_csv(curves, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CURVE_HEADER)
        for row in curves:
            w.writerow([row["episode"], repr(row["total_reward"]),
                        row["steps"], repr(row["final_gap"]),
                        repr(row["elapsed_time"])])


def train(env, tcfg: TrainConfig, rcfg: RewardConfig,
          params: PolicyParams | None = None,
          checkpoint_dir: str | Path | None = None,
          progress=None) -> TrainResult:
    """Plain REINFORCE with Adam, one update per episode.

    Parameters
    ----------
    env : BendersEnv or BanditEnv
        Anything with ``reset``, ``step``, ``gap``, ``master_time``,
        ``summary`` and ``input_dim``.
    tcfg, rcfg : TrainConfig, RewardConfig
    params : PolicyParams, optional
        Starting weights; a fresh seeded initialization otherwise.
    checkpoint_dir : path, optional
        Where ``checkpoint_every`` snapshots are written.
    progress : callable, optional
        Called with each learning-curve row.

    Returns
    -------
    TrainResult
        Final weights and one learning-curve row per completed episode.
    """
    if params is None:
        params = PolicyParams.init(env.input_dim, tcfg.hidden, tcfg.seed)
    rng = make_rng([tcfg.seed, 1])
    curves = []
    discarded = 0
    for e in range(1, tcfg.episodes + 1):
        start = time.perf_counter()
        try:
            trace = run_episode(env, params, tcfg.k, rng, rcfg.gamma)
        except NumericalFailure as exc:
            log.warning("episode %d discarded: %s", e, exc)
            discarded += 1
            continue
        grad = logprob_gradient(
            params, [(s.states, s.sample.indices, G)
                     for s, G in zip(trace.steps, trace.returns)])
        params.adam_ascent(grad, tcfg.lr)
        elapsed = (trace.elapsed if rcfg.timing == "proxy"
                   else time.perf_counter() - start)
        row = {"episode": e, "total_reward": trace.total_reward,
               "steps": len(trace), "final_gap": float(trace.final_gap),
               "elapsed_time": float(elapsed),
               "master_cuts": trace.master_cuts}
        curves.append(row)
        if progress is not None:
            progress(row)
        if checkpoint_dir is not None and tcfg.checkpoint_every and \
                e % tcfg.checkpoint_every == 0:
            save_checkpoint(params, Path(checkpoint_dir) / f"ckpt_{e:05d}.json",
                            tcfg.normalization, tcfg.t_max,
                            {"episode": e, "train": _jsonable(asdict(tcfg)),
                             "reward": asdict(rcfg)})
    return TrainResult(params, curves, discarded)


def _jsonable(d: dict) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}
