import json

import numpy as np
import pytest

from rlbd.cli import main
from rlbd.harness import (ExperimentConfig, ConfigError, exposure_rows,
                          load_config, rank_demand_correlation, run_benchmark,
                          selection_counts, write_exposure_csv)
from rlbd.model import load_instance, make_ev_instance
from rlbd.policy import forward, load_checkpoint, softmax
from rlbd.reinforce import BanditEnv


def test_generate_records_dimensions(tmp_path):
    assert main(["generate", "--seed", "1", "--size", "8x12", "--scenarios",
                 "100", "--out-dir", str(tmp_path)]) == 0
    doc = json.loads(next(tmp_path.iterdir()).read_text())
    assert doc["n1"] == 16 and doc["n_scenarios"] == 100
    assert main(["generate", "--seed", "1", "--size", "20x30", "--scenarios",
                 "2", "--out-dir", str(tmp_path / "big")]) == 0
    doc = json.loads(next((tmp_path / "big").iterdir()).read_text())
    assert (doc["n1"], doc["n2"]) == (40, 630)


def test_generate_twice_identical_bytes(tmp_path):
    for d in ("a", "b"):
        main(["generate", "--seed", "3", "--size", "2x3", "--scenarios", "4",
              "--count", "2", "--out-dir", str(tmp_path / d)])
    for f in (tmp_path / "a").iterdir():
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


def test_config_errors(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"nonsense": 1}))
    assert main(["benchmark", "--seed", "1", "--config", str(bad)]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["train", "--episodes", "1"])
    assert exc.value.code == 2
    assert main(["benchmark", "--seed", "1", "--methods", "rlbd_greedy"]) == 2
    assert main(["report", "--trace", "missing.csv", "--instance",
                 "missing.json", "--out", str(tmp_path / "x.csv")]) == 2
    with pytest.raises(ConfigError):
        load_config(None, {"replications": 0})


def test_config_file_and_flag_override(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"k": 7, "episodes": 3, "seed": 2}))
    cfg = load_config(path, {"k": 4})
    assert cfg.k == 4 and cfg.episodes == 3 and cfg.seed == 2


def test_train_single_episode_and_bandit(tmp_path):
    out = tmp_path / "t"
    assert main(["train", "--seed", "0", "--episodes", "1", "--runs", "1",
                 "--k", "2", "--timing", "proxy", "--out-dir", str(out),
                 "--t-max", "100"]) == 0
    params, _ = load_checkpoint(out / "policy_a0.01_l0.001_k2_r0.json")
    assert params.step == 1
    bandit = tmp_path / "bandit"
    assert main(["train", "--seed", "0", "--env", "bandit", "--episodes",
                 "500", "--runs", "1", "--k", "1",
                 "--out-dir", str(bandit)]) == 0
    params, _ = load_checkpoint(bandit / "policy_a0.01_l0.001_k1_r0.json")
    env = BanditEnv(seed=0)
    assert softmax(forward(params, env.states))[2] > 0.9


def test_reward_grid_writes_nine_curves(tmp_path):
    assert main(["train", "--seed", "0", "--env", "bandit", "--grid",
                 "reward", "--episodes", "2", "--runs", "1", "--k", "1",
                 "--out-dir", str(tmp_path)]) == 0
    assert len(list(tmp_path.glob("curves_*.csv"))) == 9


def test_single_cut_needs_more_iterations():
    cfg = ExperimentConfig(seed=10, test_sizes=[[2, 3]], test_count=10,
                           n_scenarios=5, methods=["multi_cut", "single_cut"],
                           timing="proxy")
    rows = run_benchmark(cfg)
    multi = {r["instance"]: r for r in rows if r["method"] == "multi_cut"}
    single = {r["instance"]: r for r in rows if r["method"] == "single_cut"}
    wins = sum(single[k]["iterations"] >= multi[k]["iterations"]
               for k in multi)
    assert wins >= 7
    assert all(r["gap_pct"] < 1.0 for r in rows)
    assert all(r["master_s"] <= r["time_s"] for r in rows)


def test_benchmark_multicut_matches_extensive_form():
    from rlbd.milp import solve_extensive_form
    from rlbd.model import ev_to_standard_form
    cfg = ExperimentConfig(seed=4, test_sizes=[[2, 3]], test_count=1,
                           n_scenarios=5, methods=["multi_cut"], eps_tol=1e-9)
    (row,) = run_benchmark(cfg)
    inst = make_ev_instance(5, 2, 3, 5)
    ef = solve_extensive_form(ev_to_standard_form(inst)).objective
    assert row["objective"] == pytest.approx(ef, rel=1e-6)


def test_exposure_uniform_demands_constant():
    inst = make_ev_instance(1, 2, 3, 4)
    inst = inst.with_demands(np.tile(inst.mu, (4, 1)))
    rows = exposure_rows(np.array([3, 0, 2, 1]), inst)
    for key in ("total_demand", "penalty_exposure", "revenue_exposure"):
        assert len({r[key] for r in rows}) == 1
    assert [r["scenario"] for r in rows] == [0, 2, 3, 1]


def test_exposure_hand_built(tmp_path):
    inst = make_ev_instance(1, 1, 2, 3)
    inst = inst.with_demands(np.array([[1.0, 2.0], [3.0, 4.0], [0.0, 5.0]]))
    inst.p[:] = [10.0, 1.0]
    inst.r[:] = [2.0, 3.0]
    trace = tmp_path / "trace.csv"
    trace.write_text("t,LB,UB,Gap,T_MP,cuts_added,cum_cuts,selected\n"
                     "1,0,0,0,0,2,0,1;2\n2,0,0,0,0,1,2,1\n3,0,0,0,0,0,3,\n")
    nc = selection_counts(trace, 3)
    assert nc.tolist() == [0, 2, 1]
    rows = exposure_rows(nc, inst)
    assert [r["scenario"] for r in rows] == [1, 2, 0]
    assert rows[0]["total_demand"] == 7.0
    assert rows[0]["penalty_exposure"] == 34.0
    assert rows[0]["revenue_exposure"] == 18.0
    assert rows[1]["penalty_exposure"] == 5.0
    assert rank_demand_correlation(rows) == pytest.approx(-1.0)
    write_exposure_csv(rows, tmp_path / "e.csv")
    assert (tmp_path / "e.csv").read_text().startswith(
        "rank,scenario,NC,total_demand,penalty_exposure,revenue_exposure\n")


def test_evaluate_and_report_roundtrip(tmp_path):
    main(["generate", "--seed", "2", "--size", "2x3", "--scenarios", "5",
          "--out-dir", str(tmp_path)])
    inst_path = next(tmp_path.glob("ev_*.json"))
    main(["train", "--seed", "2", "--instance", str(inst_path), "--episodes",
          "1", "--runs", "1", "--k", "2", "--timing", "proxy", "--out-dir",
          str(tmp_path)])
    ck = tmp_path / "policy_a0.01_l0.001_k2_r0.json"
    trace = tmp_path / "trace.csv"
    assert main(["evaluate", "--checkpoint", str(ck), "--instance",
                 str(inst_path), "--trace", str(trace)]) == 0
    out = tmp_path / "exposure.csv"
    assert main(["report", "--trace", str(trace), "--instance",
                 str(inst_path), "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 1 + load_instance(inst_path).n_scenarios


def test_train_on_several_instances(tmp_path):
    main(["generate", "--seed", "5", "--size", "2x3", "--scenarios", "4",
          "--count", "2", "--out-dir", str(tmp_path)])
    files = sorted(str(p) for p in tmp_path.glob("ev_*.json"))
    assert len(files) == 2
    assert main(["train", "--seed", "0", "--train-instances", *files,
                 "--episodes", "2", "--runs", "1", "--k", "2", "--timing",
                 "proxy", "--out-dir", str(tmp_path / "t")]) == 0
    lines = (tmp_path / "t" / "curves_a0.01_l0.001_k2_r0.csv").read_text()
    assert len(lines.splitlines()) == 3
