"""Experiment plumbing behind the command-line interface.

Everything here writes plain files (instance JSON, checkpoint JSON, CSV) whose
names are derived from the configuration, so reruns overwrite rather than
accumulate. With ``timing = "proxy"`` every CSV is a pure function of the
configuration and seed.
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy.stats import spearmanr

from .benders import (Aggregate, RandomK, SelectAll, run_benders,
                      write_trace_csv)
from .features import FeatureDump
from .model import (DemandShape, EvInstance, ev_to_standard_form,
                    load_instance, make_ev_instance, save_instance)
from .policy import PolicyGreedy, load_checkpoint, save_checkpoint
from .reinforce import (BanditEnv, BendersEnv, RewardConfig, TrainConfig,
                        train, write_curves_csv)

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "load_config",
    "METHODS",
    "REWARD_GRID",
    "K_GRID",
    "instance_name",
    "generate_instances",
    "benchmark_instances",
    "train_policies",
    "evaluate_policy",
    "BENCHMARK_HEADER",
    "run_benchmark",
    "write_benchmark_csv",
    "EXPOSURE_HEADER",
    "selection_counts",
    "exposure_rows",
    "write_exposure_csv",
    "rank_demand_correlation",
]

log = logging.getLogger(__name__)

METHODS = ("multi_cut", "single_cut", "random_k", "rlbd_greedy")
REWARD_GRID = {"alpha": (0.01, 0.1, 1.0), "lam": (0.001, 0.01, 0.1)}
K_GRID = (10, 20, 30)


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


@dataclass
class ExperimentConfig:
    # training instance
    n_stations: int = 4
    n_sites: int = 6
    n_scenarios: int = 20
    shape: str = DemandShape.NORMAL
    seed: int | None = None
    instance: str | None = None
    train_instances: list = field(default_factory=list)
    # test instances
    test_sizes: list = field(default_factory=lambda: [[4, 6], [6, 9]])
    test_shapes: list = field(default_factory=lambda: [DemandShape.NORMAL])
    test_count: int = 5
    test_instances: list = field(default_factory=list)
    # solver
    methods: list = field(default_factory=lambda: list(METHODS))
    eps_tol: float = 0.01
    time_limit_s: float = 3600.0
    t_max: int = 500
    timing: str = "wallclock"
    replications: int = 1
    # training
    env: str = "ev"
    k: int = 5
    episodes: int = 200
    lr: float = 1e-3
    alpha: float = 0.01
    beta: float = 0.001
    lam: float = 0.001
    t_ref: float = 0.1
    gamma: float = 0.99
    runs: int = 5
    grid_alpha: list | None = None
    grid_lam: list | None = None
    grid_k: list | None = None
    checkpoint_every: int = 0
    normalization: str = "signed_log"
    feature_dump: bool = False
    checkpoint: str | None = None
    out_dir: str = "runs"
    workers: int = 1

    def validate(self) -> "ExperimentConfig":
        if self.replications < 1:
            raise ConfigError("replications must be at least 1")
        if self.runs < 1 or self.episodes < 1 or self.k < 1:
            raise ConfigError("runs, episodes and k must be positive")
        if self.timing not in ("wallclock", "proxy"):
            raise ConfigError(f"unknown timing mode {self.timing!r}")
        if self.env not in ("ev", "bandit"):
            raise ConfigError(f"unknown environment {self.env!r}")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown methods {bad}")
        for s in [self.shape, *self.test_shapes]:
            if s not in DemandShape.ALL:
                raise ConfigError(f"unknown demand shape {s!r}")
        if self.seed is not None and int(self.seed) < 0:
            raise ConfigError("seed must be nonnegative")
        if not 0.0 < self.gamma <= 1.0 or self.t_ref <= 0:
            raise ConfigError("need 0 < gamma <= 1 and t_ref > 0")
        return self

    def reward_config(self, **over) -> RewardConfig:
        d = dict(alpha=self.alpha, beta=self.beta, lam=self.lam,
                 t_ref=self.t_ref, gamma=self.gamma, timing=self.timing)
        d.update(over)
        return RewardConfig(**d)

    def train_config(self, **over) -> TrainConfig:
        d = dict(k=self.k, t_max=self.t_max, episodes=self.episodes,
                 lr=self.lr, eps_tol=self.eps_tol, seed=self.seed or 0,
                 normalization=self.normalization,
                 checkpoint_every=self.checkpoint_every)
        d.update(over)
        return TrainConfig(**d)


def load_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    """Read a JSON config (unknown keys rejected) and apply ``overrides``."""
    data = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    data.update({k: v for k, v in (overrides or {}).items() if v is not None})
    try:
        return ExperimentConfig(**data).validate()
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def _require_seed(cfg: ExperimentConfig) -> int:
    if cfg.seed is None:
        raise ConfigError("--seed is required")
    return int(cfg.seed)


def instance_name(I: int, J: int, S: int, shape: str, seed: int) -> str:
    return f"ev_{I}x{J}_s{S}_{shape}_seed{seed}.json"


def generate_instances(cfg: ExperimentConfig, count: int = 1,
                       out_dir=None) -> list:
    """Write ``count`` training-size instances with seeds ``seed, seed+1..``."""
    seed = _require_seed(cfg)
    out = Path(out_dir or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(count):
        s = seed + i
        inst = make_ev_instance(s, cfg.n_stations, cfg.n_sites,
                                cfg.n_scenarios, cfg.shape)
        path = out / instance_name(cfg.n_stations, cfg.n_sites,
                                   cfg.n_scenarios, cfg.shape, s)
        save_instance(inst, path)
        paths.append(path)
    return paths


def _load(path) -> EvInstance:
    try:
        return load_instance(path)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot load instance {path}: {exc}")


def _training_instance(cfg: ExperimentConfig) -> EvInstance:
    if cfg.instance:
        return _load(cfg.instance)
    return make_ev_instance(_require_seed(cfg), cfg.n_stations, cfg.n_sites,
                            cfg.n_scenarios, cfg.shape)


def benchmark_instances(cfg: ExperimentConfig) -> list:
    """``(name, EvInstance)`` pairs for benchmarking.

    Explicit ``test_instances`` paths win; otherwise ``test_count`` fresh
    instances per size and shape, seeded from ``seed + 1`` onward so they
    never coincide with the training instance.
    """
    if cfg.test_instances:
        out = []
        for p in cfg.test_instances:
            try:
                out.append((Path(p).stem, load_instance(p)))
            except (OSError, ValueError, KeyError) as exc:
                raise ConfigError(f"cannot load instance {p}: {exc}")
        return out
    seed = _require_seed(cfg)
    out = []
    for I, J in cfg.test_sizes:
        for shape in cfg.test_shapes:
            for i in range(cfg.test_count):
                s = seed + 1 + i
                inst = make_ev_instance(s, I, J, cfg.n_scenarios, shape)
                out.append((Path(instance_name(I, J, cfg.n_scenarios, shape,
                                               s)).stem, inst))
    return out


def _grid(cfg: ExperimentConfig) -> list:
    return [(a, l, k)
            for a in (cfg.grid_alpha or [cfg.alpha])
            for l in (cfg.grid_lam or [cfg.lam])
            for k in (cfg.grid_k or [cfg.k])]


def _tag(alpha, lam, k, run) -> str:
    return f"a{alpha:g}_l{lam:g}_k{k}_r{run}"


def _train_one(job):
    cfg, inst_dict, alpha, lam, k, run, out = job
    tcfg = cfg.train_config(k=k, seed=int(cfg.seed) + run)
    rcfg = cfg.reward_config(alpha=alpha, lam=lam)
    tag = _tag(alpha, lam, k, run)
    dump = FeatureDump(out / f"features_{tag}.csv") if cfg.feature_dump \
        and inst_dict is not None else None
    ckdir = out / f"checkpoints_{tag}" if cfg.checkpoint_every else None
    if ckdir is not None:
        ckdir.mkdir(exist_ok=True)
    if inst_dict is None:
        env = BanditEnv(seed=tcfg.seed)
    else:
        problems = [ev_to_standard_form(EvInstance.from_dict(d))
                    for d in inst_dict]
        env = BendersEnv(problems, rcfg, tcfg, dump)
    try:
        res = train(env, tcfg, rcfg, checkpoint_dir=ckdir)
    finally:
        if dump is not None:
            dump.close()
    ck = out / f"policy_{tag}.json"
    save_checkpoint(res.params, ck, tcfg.normalization, tcfg.t_max,
                    {"k": k, "alpha": alpha, "lam": lam, "run": run,
                     "seed": tcfg.seed, "episodes": tcfg.episodes,
                     "beta": rcfg.beta, "t_ref": rcfg.t_ref,
                     "gamma": rcfg.gamma, "timing": rcfg.timing})
    write_curves_csv(res.curves, out / f"curves_{tag}.csv")
    return str(ck)


def train_policies(cfg: ExperimentConfig) -> list:
    """Train ``runs`` policies per grid point; return checkpoint paths.

    With ``env = "bandit"`` the one-step three-armed environment replaces
    the Benders episodes (a smoke test of the learning loop). A non-empty
    ``train_instances`` list trains on those files in turn, one per episode,
    instead of the single configured instance.
    """
    _require_seed(cfg)
    if cfg.env == "bandit":
        inst = None
    elif cfg.train_instances:
        inst = [_load(path).to_dict() for path in cfg.train_instances]
    else:
        inst = [_training_instance(cfg).to_dict()]
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(cfg, inst, a, l, k, run, out)
            for a, l, k in _grid(cfg) for run in range(cfg.runs)]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            return list(pool.map(_train_one, jobs))
    return [_train_one(j) for j in jobs]


def _greedy_selector(cfg: ExperimentConfig, k: int | None = None):
    if not cfg.checkpoint:
        raise ConfigError("rlbd_greedy needs a checkpoint")
    try:
        params, info = load_checkpoint(cfg.checkpoint)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot load checkpoint {cfg.checkpoint}: {exc}")
    k = k or info["meta"].get("k", cfg.k)
    return PolicyGreedy(params, int(k), info["t_max"], info["normalization"])


def evaluate_policy(cfg: ExperimentConfig, trace_path=None):
    """Greedy rollout of ``cfg.checkpoint`` on the configured instance."""
    inst = _training_instance(cfg)
    sel = _greedy_selector(cfg)
    res = run_benders(ev_to_standard_form(inst), sel, cfg.eps_tol, cfg.t_max,
                      cfg.time_limit_s, cfg.timing)
    if trace_path is not None:
        write_trace_csv(res.trace, trace_path)
    return res


def _selector(method: str, cfg: ExperimentConfig, rep: int):
    if method == "multi_cut":
        return SelectAll()
    if method == "single_cut":
        return Aggregate()
    if method == "random_k":
        return RandomK(cfg.k, int(cfg.seed) + rep)
    return _greedy_selector(cfg)


BENCHMARK_HEADER = ["method", "instance", "replication", "time_s",
                    "master_s", "iterations", "gap_pct", "total_cuts",
                    "objective", "status"]


def run_benchmark(cfg: ExperimentConfig, trace_dir=None) -> list:
    """Run every method on every test instance; one dict per run."""
    _require_seed(cfg)
    rows = []
    for name, inst in benchmark_instances(cfg):
        problem = ev_to_standard_form(inst)
        for method in cfg.methods:
            for rep in range(cfg.replications):
                res = run_benders(problem, _selector(method, cfg, rep),
                                  cfg.eps_tol, cfg.t_max, cfg.time_limit_s,
                                  cfg.timing)
                rows.append({
                    "method": method, "instance": name, "replication": rep,
                    "time_s": res.elapsed, "master_s": res.master_time,
                    "iterations": res.iterations,
                    "gap_pct": 100.0 * max(res.gap, 0.0),
                    "total_cuts": res.master_cuts,
                    "objective": res.objective, "status": res.status,
                })
                if trace_dir is not None:
                    write_trace_csv(res.trace, Path(trace_dir)
                                    / f"trace_{method}_{name}_r{rep}.csv")
    return rows


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def write_benchmark_csv(rows, path) -> None:
    """Per-run rows followed by one ``mean`` row per method."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(BENCHMARK_HEADER)
        for r in rows:
            w.writerow([_fmt(r[k]) for k in BENCHMARK_HEADER])
        for method in dict.fromkeys(r["method"] for r in rows):
            sub = [r for r in rows if r["method"] == method]
            mean = {k: float(np.mean([r[k] for r in sub]))
                    for k in ("time_s", "master_s", "iterations", "gap_pct",
                              "total_cuts", "objective")}
            conv = sum(r["status"] == "converged" for r in sub)
            w.writerow([method, "mean", len(sub)]
                       + [_fmt(mean[k]) for k in BENCHMARK_HEADER[3:9]]
                       + [f"converged={conv}/{len(sub)}"])


EXPOSURE_HEADER = ["rank", "scenario", "NC", "total_demand",
                   "penalty_exposure", "revenue_exposure"]


def selection_counts(trace_path, n_scenarios: int) -> np.ndarray:
    """``NC_T`` per scenario from the ``selected`` column of a trace CSV."""
    nc = np.zeros(n_scenarios, dtype=np.int64)
    with open(trace_path, newline="") as fh:
        for row in csv.DictReader(fh):
            for s in filter(None, row.get("selected", "").split(";")):
                nc[int(s)] += 1
    return nc


def exposure_rows(nc, inst: EvInstance) -> list:
    """Scenarios by descending selection count (ties to lower index)."""
    d = inst.demands
    order = sorted(range(len(nc)), key=lambda w: (-nc[w], w))
    return [{"rank": r + 1, "scenario": w, "NC": int(nc[w]),
             "total_demand": float(d[w].sum()),
             "penalty_exposure": float(d[w] @ inst.p),
             "revenue_exposure": float(d[w] @ inst.r)}
            for r, w in enumerate(order)]


def write_exposure_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(EXPOSURE_HEADER)
        for r in rows:
            w.writerow([_fmt(r[k]) for k in EXPOSURE_HEADER])


def rank_demand_correlation(rows) -> float:
    """Spearman correlation between selection rank and total demand."""
    rank = [r["rank"] for r in rows]
    demand = [r["total_demand"] for r in rows]
    return float(spearmanr(rank, demand)[0])

