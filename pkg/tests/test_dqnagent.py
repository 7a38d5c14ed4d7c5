from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rlmsad import dqnagent as dq
from rlmsad import neuralcore as nc
from rlmsad.mdpenv import DetectorSelectionEnv, RewardConfig
from helpers import pool_from_labels


def bandit_env():
    # one-step episode: detector 0 flags the (true) anomaly, detector 1 misses it
    return DetectorSelectionEnv(pool_from_labels([[1, 0]], [1]), RewardConfig(1, 0.5, 0.5, 1))


def test_epsilon_schedule():
    cfg = dq.AgentConfig(total_steps=1000)
    assert cfg.epsilon(0) == 1.0
    assert cfg.epsilon(50) == pytest.approx(0.525)
    assert cfg.epsilon(100) == pytest.approx(0.05)
    assert cfg.epsilon(999) == pytest.approx(0.05)


@given(st.integers(0, 10**6), st.integers(1, 10**6))
def test_epsilon_in_bounds(step, total):
    eps = dq.AgentConfig(total_steps=total).epsilon(step)
    assert 0.05 - 1e-12 <= eps <= 1.0


def test_config_validation():
    for bad in ({"exploration_final_eps": 0.01}, {"batch_size": 0}, {"learning_rate": 0},
                {"hidden": ()}, {"checkpoint_interval": -1}, {"buffer_size": 8, "batch_size": 32}):
        with pytest.raises(dq.AgentError):
            dq.AgentConfig(**bad).validate()


def test_replay_buffer_overwrites_oldest():
    buf = dq.ReplayBuffer(3, 1)
    for i in range(5):
        buf.add([i], 0, float(i), [i + 1], False)
    assert len(buf) == 3 and buf.inserted == 5
    assert sorted(buf.rewards.tolist()) == [2.0, 3.0, 4.0]


def test_greedy_ties_go_lowest():
    assert dq.greedy_action([1.0, 3.0, 3.0]) == 1
    with pytest.raises(dq.AgentError):
        dq.greedy_action([np.nan, 1.0])


def test_bellman_targets_by_hand():
    net = nc.DenseNetwork((1, 2), [np.array([[1.0, 2.0]])], [np.array([0.0, 0.5])])
    y = dq.bellman_targets(net, np.array([1.0, -0.4]), np.array([[1.0], [2.0]]), np.array([0.0, 1.0]), 1.0)
    # max(1, 2.5) = 2.5 bootstrapped; second row terminal
    assert y.tolist() == [3.5, -0.4]


def test_q_update_moves_only_taken_action():
    online = nc.init_network((2, 3), 0)
    target = online.copy()
    before = nc.forward(online, [[1.0, 0.0]])[0].copy()
    batch = (np.array([[1.0, 0.0]]), np.array([1]), np.array([5.0]),
             np.array([[0.0, 0.0]]), np.array([1.0]))
    dq.q_update(online, target, batch, 1.0, dq.AgentConfig(learning_rate=1e-2), nc.AdamState())
    after = nc.forward(online, [[1.0, 0.0]])[0]
    assert after[1] > before[1]
    assert after[0] == pytest.approx(before[0]) and after[2] == pytest.approx(before[2])


def test_bandit_finds_optimal_arm():
    cfg = dq.AgentConfig(hidden=(16,), learning_rate=1e-3, learning_starts=200, total_steps=5000,
                         target_update_interval=200)
    wins = 0
    for seed in range(10):
        policy, _ = dq.train(bandit_env, dq.AgentConfig(**{**cfg.__dict__, "seed": seed}))
        wins += policy.act(bandit_env().reset()) == 0
    assert wins >= 9


def test_training_is_deterministic():
    cfg = dq.AgentConfig(hidden=(8,), learning_starts=50, total_steps=400, seed=3)
    a, sa = dq.train(bandit_env, cfg)
    b, sb = dq.train(bandit_env, cfg)
    assert dq.policy_to_json(a) == dq.policy_to_json(b)
    assert sa.episode_returns == sb.episode_returns


def test_checkpoint_keeps_best_snapshot():
    cfg = dq.AgentConfig(hidden=(8,), learning_starts=50, total_steps=600, checkpoint_interval=100, seed=1)
    policy, stats = dq.train(bandit_env, cfg)
    assert stats.best_step is not None and stats.best_step % 100 == 0
    assert dq.greedy_return(policy.network, bandit_env()) == stats.best_return


def test_evaluate_policy_trace():
    env = DetectorSelectionEnv(pool_from_labels([[1, 0], [0, 1], [1, 1]], [1, 0, 1]))
    net = nc.DenseNetwork((5, 2), [np.zeros((5, 2))], [np.array([0.0, 1.0])])
    trace = dq.evaluate_policy(dq.Policy(net), env)
    assert trace.actions.tolist() == [1, 1, 1]
    assert trace.predictions.tolist() == [0, 1, 1]
    assert trace.exact_return() == Fraction(-1.5) + Fraction(-0.4) + Fraction(1.0)
    assert trace.episode_return == pytest.approx(-0.9)


def test_policy_round_trip():
    policy = dq.Policy(nc.init_network((5, 4, 3), 2), {"mask": "full", "kinds": ("ecod", "copod")})
    back = dq.policy_from_json(dq.policy_to_json(policy))
    obs = np.linspace(0, 1, 5)
    assert np.array_equal(back.q_values(obs), policy.q_values(obs))
    assert back.metadata["kinds"] == ["ecod", "copod"]
    with pytest.raises(dq.AgentError):
        dq.policy_from_json('{"format": "rlmsad-policy", "format_version": 7}')


def test_act_rejects_bad_observation():
    policy = dq.Policy(nc.init_network((5, 2), 0))
    with pytest.raises(dq.AgentError):
        policy.act(np.zeros(4))
