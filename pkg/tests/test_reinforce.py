import numpy as np
import pytest

from rlbd.benders import SelectAll, run_benders
from rlbd.model import ev_to_standard_form, make_ev_instance, make_rng
from rlbd.policy import PolicyParams, forward, sequence_log_prob, softmax
from rlbd.reinforce import (BanditEnv, BendersEnv, RewardConfig, TrainConfig,
                            returns_to_go, run_episode, step_reward, train,
                            write_curves_csv)

DEFAULT_WEIGHTS = RewardConfig(alpha=0.01, beta=0.001, lam=0.001, t_ref=0.1)


def test_step_reward_examples():
    r = step_reward(0.2, 0.1, 0.1, DEFAULT_WEIGHTS)
    assert r == pytest.approx(0.01 * np.log(2) - 0.002)
    assert r == pytest.approx(0.0049315, abs=1e-7)
    assert step_reward(0.3, 0.3, 0.0, DEFAULT_WEIGHTS) == pytest.approx(-0.001)
    assert step_reward(0.01, 0.1, 0.0, DEFAULT_WEIGHTS) < 0
    assert step_reward(None, 0.5, 0.0, DEFAULT_WEIGHTS) == pytest.approx(-0.001)
    assert np.isfinite(step_reward(0.1, 0.0, 0.0, DEFAULT_WEIGHTS))


def test_returns_to_go():
    assert np.allclose(returns_to_go([1, 1, 1], 0.5), [1.75, 1.5, 1.0])
    assert np.allclose(returns_to_go([1, 2, 3], 1.0), [6, 5, 3])
    assert np.allclose(returns_to_go([4.2], 0.9), [4.2])
    r = np.random.default_rng(0).normal(size=7)
    G = returns_to_go(r, 0.9)
    assert np.allclose(G[:-1], r[:-1] + 0.9 * G[1:], rtol=0, atol=1e-15)
    assert np.allclose(returns_to_go(2 * r, 0.9), 2 * G)
    with pytest.raises(ValueError):
        returns_to_go([], 0.9)


def test_config_validation():
    with pytest.raises(ValueError):
        RewardConfig(gamma=0.0)
    with pytest.raises(ValueError):
        RewardConfig(t_ref=0.0)
    with pytest.raises(ValueError):
        TrainConfig(k=0)


@pytest.fixture(scope="module")
def small():
    return ev_to_standard_form(make_ev_instance(0, 2, 3, 5))


def test_full_tolerance_gives_one_step(toy_problem):
    tc = TrainConfig(k=1, eps_tol=1.0, t_max=50)
    env = BendersEnv(toy_problem, RewardConfig(timing="proxy"), tc)
    trace = run_episode(env, PolicyParams.init(seed=0), 1, make_rng(0))
    assert len(trace) == 1
    assert trace.steps[0].gap == pytest.approx(1 / 11)


def test_episode_converges_and_logprobs_replay(small):
    ref = run_benders(small, SelectAll())
    tc = TrainConfig(k=2, t_max=200)
    params = PolicyParams.init(seed=0)
    env = BendersEnv(small, RewardConfig(timing="proxy"), tc)
    trace = run_episode(env, params, 2, make_rng(1), gamma=0.99)
    assert len(trace) <= 200
    assert trace.final_gap < 0.01
    assert env.run.state.ub == pytest.approx(ref.objective, rel=0.02)
    for s in trace.steps:
        z = forward(params, s.states)
        assert sequence_log_prob(z, s.sample.indices) == pytest.approx(
            s.sample.log_prob, abs=1e-10)
    assert np.allclose(trace.returns, returns_to_go(
        [s.reward for s in trace.steps], 0.99))


def test_proxy_training_is_reproducible(small, tmp_path):
    tc = TrainConfig(k=2, episodes=3, seed=4, t_max=100)
    rc = RewardConfig(timing="proxy")
    out = []
    for k in range(2):
        res = train(BendersEnv(small, rc, tc), tc, rc)
        path = tmp_path / f"c{k}.csv"
        write_curves_csv(res.curves, path)
        out.append((res.params.flat().tobytes(), path.read_bytes()))
    assert out[0] == out[1]


def test_zero_learning_rate_keeps_params(small):
    tc = TrainConfig(k=2, episodes=2, lr=0.0, t_max=100)
    rc = RewardConfig(timing="proxy")
    start = PolicyParams.init(seed=tc.seed)
    res = train(BendersEnv(small, rc, tc), tc, rc, params=start.copy())
    assert res.params.flat().tobytes() == start.flat().tobytes()


def test_single_episode_applies_one_update(small):
    tc = TrainConfig(k=2, episodes=1, t_max=100)
    rc = RewardConfig(timing="proxy")
    res = train(BendersEnv(small, rc, tc), tc, rc)
    assert res.params.step == 1 and len(res.curves) == 1


def test_checkpoints_written(small, tmp_path):
    tc = TrainConfig(k=2, episodes=2, t_max=100, checkpoint_every=1)
    rc = RewardConfig(timing="proxy")
    train(BendersEnv(small, rc, tc), tc, rc, checkpoint_dir=tmp_path)
    assert sorted(p.name for p in tmp_path.iterdir()) == [
        "ckpt_00001.json", "ckpt_00002.json"]


def test_bandit_learns_best_arm():
    env = BanditEnv(seed=0)
    tc = TrainConfig(k=1, t_max=1, episodes=500, seed=0)
    res = train(env, tc, RewardConfig())
    assert softmax(forward(res.params, env.states))[2] > 0.9


def test_env_cycles_through_several_problems(small):
    other = ev_to_standard_form(make_ev_instance(3, 2, 3, 5))
    rcfg = RewardConfig(timing="proxy")
    env = BendersEnv([small, other], rcfg, TrainConfig(k=2))
    seen = []
    for _ in range(3):
        env.reset()
        seen.append(env.problem)
    assert seen == [small, other, small]
