"""``rlbd`` command line: generate, train, evaluate, benchmark, report.

Exit codes: 0 success, 2 configuration error, 3 solver failure, 4 time limit
reached before any incumbent existed.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .benders import MasterTimeLimit, MasterUnbounded, SubproblemInfeasible
from .harness import (K_GRID, REWARD_GRID, ConfigError, evaluate_policy,
                      exposure_rows, generate_instances, load_config,
                      rank_demand_correlation, run_benchmark,
                      selection_counts, train_policies, write_benchmark_csv,
                      write_exposure_csv)
from .lp import NumericalFailure
from .model import load_instance

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_TIME = 0, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _size(text):
    try:
        I, J = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected IxJ, got {text!r}")
    return [I, J]


def _common(p, seed_required=False):
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--seed", type=int, required=seed_required)
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--timing", choices=["wallclock", "proxy"])
    p.add_argument("--eps-tol", dest="eps_tol", type=float)
    p.add_argument("--t-max", dest="t_max", type=int)
    p.add_argument("--k", type=int)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="rlbd", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True,
                            parser_class=_Parser)

    g = sub.add_parser("generate", help="write seeded EV instance files")
    _common(g)
    g.add_argument("--size", type=_size, help="IxJ, e.g. 8x12")
    g.add_argument("--scenarios", dest="n_scenarios", type=int)
    g.add_argument("--shape", choices=["normal", "left_skewed",
                                       "right_skewed"])
    g.add_argument("--count", type=int, default=1)

    t = sub.add_parser("train", help="REINFORCE training")
    _common(t, seed_required=True)
    t.add_argument("--instance")
    t.add_argument("--train-instances", dest="train_instances", nargs="+",
                   help="train on several instance files, one per episode "
                        "in turn")
    t.add_argument("--env", choices=["ev", "bandit"])
    t.add_argument("--episodes", type=int)
    t.add_argument("--runs", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--alpha", type=float)
    t.add_argument("--beta", type=float)
    t.add_argument("--lam", type=float)
    t.add_argument("--t-ref", dest="t_ref", type=float)
    t.add_argument("--gamma", type=float)
    t.add_argument("--grid", choices=["reward", "k", "none"],
                   help="sweep the nine (alpha, lam) pairs or K in 10/20/30")
    t.add_argument("--checkpoint-every", dest="checkpoint_every", type=int)
    t.add_argument("--feature-dump", dest="feature_dump",
                   action="store_true", default=None)
    t.add_argument("--workers", type=int)

    e = sub.add_parser("evaluate", help="greedy rollout of a checkpoint")
    _common(e)
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--instance", required=True)
    e.add_argument("--trace", help="trace CSV to write")
    e.add_argument("--time-limit", dest="time_limit_s", type=float)

    b = sub.add_parser("benchmark", help="compare cut-selection methods")
    _common(b, seed_required=True)
    b.add_argument("--methods", nargs="+")
    b.add_argument("--checkpoint")
    b.add_argument("--instances", dest="test_instances", nargs="+")
    b.add_argument("--sizes", dest="test_sizes", type=_size, nargs="+")
    b.add_argument("--shapes", dest="test_shapes", nargs="+")
    b.add_argument("--count", dest="test_count", type=int)
    b.add_argument("--scenarios", dest="n_scenarios", type=int)
    b.add_argument("--replications", type=int)
    b.add_argument("--time-limit", dest="time_limit_s", type=float)
    b.add_argument("--out", help="benchmark CSV (default out_dir/benchmark.csv)")
    b.add_argument("--traces", action="store_true",
                   help="also write one trace CSV per run")

    r = sub.add_parser("report", help="scenario exposure of a trace")
    r.add_argument("--trace", required=True)
    r.add_argument("--instance", required=True)
    r.add_argument("--out", required=True)
    return ap


_NOT_CONFIG = {"command", "verbose", "config", "count", "out", "trace",
               "traces", "size", "grid"}


def _config(args):
    over = {k: v for k, v in vars(args).items() if k not in _NOT_CONFIG}
    if getattr(args, "size", None):
        over["n_stations"], over["n_sites"] = args.size
    grid = getattr(args, "grid", None)
    if grid == "reward":
        over["grid_alpha"] = list(REWARD_GRID["alpha"])
        over["grid_lam"] = list(REWARD_GRID["lam"])
    elif grid == "k":
        over["grid_k"] = list(K_GRID)
    return load_config(args.config, over)


def cmd_generate(args) -> int:
    cfg = _config(args)
    if cfg.seed is None:
        cfg.seed = 0
    for path in generate_instances(cfg, args.count):
        print(path)
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config(args)
    for path in train_policies(cfg):
        print(path)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    res = evaluate_policy(cfg, args.trace)
    print(json.dumps({"status": res.status, "objective": res.objective,
                      "gap": res.gap, "iterations": res.iterations,
                      "total_cuts": res.master_cuts, "time_s": res.elapsed,
                      "master_s": res.master_time}))
    return EXIT_OK


def cmd_benchmark(args) -> int:
    cfg = _config(args)
    if "rlbd_greedy" in cfg.methods and not cfg.checkpoint:
        raise ConfigError("rlbd_greedy needs --checkpoint")
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = run_benchmark(cfg, out_dir if args.traces else None)
    out = Path(args.out) if args.out else out_dir / "benchmark.csv"
    write_benchmark_csv(rows, out)
    print(out)
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        inst = load_instance(args.instance)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot load instance {args.instance}: {exc}")
    if not Path(args.trace).exists():
        raise ConfigError(f"no trace at {args.trace}")
    rows = exposure_rows(selection_counts(args.trace, inst.n_scenarios), inst)
    write_exposure_csv(rows, args.out)
    if len(rows) > 1:
        print(f"spearman(rank, total_demand) = "
              f"{rank_demand_correlation(rows):.4f}")
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "train": cmd_train,
            "evaluate": cmd_evaluate, "benchmark": cmd_benchmark,
            "report": cmd_report}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else
                        logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"rlbd: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MasterTimeLimit as exc:
        print(f"rlbd: time limit without incumbent: {exc}", file=sys.stderr)
        return EXIT_TIME
    except (NumericalFailure, MasterUnbounded, SubproblemInfeasible,
            RuntimeError) as exc:
        print(f"rlbd: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
