"""Deep Q-learning agent: replay buffer, target network, epsilon-greedy.

Everything runs on numpy through :mod:`rlmsad.neuralcore`, so a run is
bitwise reproducible from its seed.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np

from . import neuralcore as nc

log = logging.getLogger(__name__)

POLICY_FORMAT_VERSION = 1
MIN_EPSILON = 0.05


class AgentError(RuntimeError):
    pass


@dataclass(frozen=True)
class AgentConfig:
    hidden: tuple[int, ...] = (64, 64)
    learning_rate: float = 1e-4
    buffer_size: int = 100_000
    batch_size: int = 32
    learning_starts: int = 1000
    train_freq: int = 4
    target_update_interval: int = 2000
    exploration_fraction: float = 0.1
    exploration_initial_eps: float = 1.0
    exploration_final_eps: float = 0.05
    huber_delta: float = 1.0
    total_steps: int = 50_000
    checkpoint_interval: int = 0
    seed: int = 0

    def validate(self) -> None:
        ints = ("buffer_size", "batch_size", "learning_starts", "train_freq",
                "target_update_interval", "total_steps")
        for name in ints:
            if int(getattr(self, name)) < 1:
                raise AgentError(f"{name} must be positive")
        if not self.hidden or any(h < 1 for h in self.hidden):
            raise AgentError("hidden sizes must be positive")
        if self.learning_rate <= 0 or self.huber_delta <= 0:
            raise AgentError("learning_rate and huber_delta must be positive")
        if self.checkpoint_interval < 0:
            raise AgentError("checkpoint_interval must be >= 0")
        if self.batch_size > self.buffer_size:
            raise AgentError("batch_size exceeds buffer_size")
        if not 0 < self.exploration_fraction <= 1:
            raise AgentError("exploration_fraction must lie in (0, 1]")
        if not MIN_EPSILON <= self.exploration_final_eps <= self.exploration_initial_eps <= 1.0:
            raise AgentError(f"need {MIN_EPSILON} <= final eps <= initial eps <= 1")

    def epsilon(self, step: int) -> float:
        """Linear anneal over the first ``exploration_fraction`` of training."""
        horizon = self.exploration_fraction * self.total_steps
        frac = min(1.0, step / horizon) if horizon > 0 else 1.0
        return self.exploration_initial_eps + frac * (self.exploration_final_eps - self.exploration_initial_eps)


class ReplayBuffer:
    """Fixed-capacity ring buffer; the oldest record is overwritten first."""

    def __init__(self, capacity: int, obs_dim: int):
        self.capacity = int(capacity)
        self.obs = np.zeros((self.capacity, obs_dim))
        self.next_obs = np.zeros((self.capacity, obs_dim))
        self.actions = np.zeros(self.capacity, dtype=np.int64)
        self.rewards = np.zeros(self.capacity)
        self.dones = np.zeros(self.capacity)
        self.cursor = 0
        self.size = 0
        self.inserted = 0

    def __len__(self):
        return self.size

    def add(self, obs, action, reward, next_obs, done) -> None:
        i = self.cursor
        self.obs[i] = obs
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_obs[i] = next_obs
        self.dones[i] = float(done)
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        self.inserted += 1

    def sample(self, rng: np.random.Generator, batch_size: int):
        idx = rng.integers(0, self.size, size=batch_size)
        return self.obs[idx], self.actions[idx], self.rewards[idx], self.next_obs[idx], self.dones[idx]


@dataclass
class Policy:
    """Greedy policy over a trained Q-network; ``metadata`` echoes the
    observation mask, pool order and training config."""

    network: nc.DenseNetwork
    metadata: dict = field(default_factory=dict)

    @property
    def n_actions(self) -> int:
        return self.network.n_out

    def q_values(self, obs) -> np.ndarray:
        return nc.forward(self.network, obs)

    def act(self, obs) -> int:
        return act_greedy(self, obs)


@dataclass
class TrainingStats:
    episode_returns: list[float] = field(default_factory=list)
    mean_losses: list[float] = field(default_factory=list)
    n_updates: int = 0
    n_target_syncs: int = 0
    total_steps: int = 0
    best_return: float | None = None
    best_step: int | None = None


def greedy_action(q: np.ndarray) -> int:
    """argmax with ties going to the lowest index."""
    q = np.asarray(q, dtype=float).ravel()
    if not np.all(np.isfinite(q)):
        raise AgentError("non-finite Q-values")
    return int(np.argmax(q))


def act_greedy(policy: Policy, obs) -> int:
    obs = np.asarray(obs, dtype=float)
    if obs.shape != (policy.network.n_in,) or not np.all(np.isfinite(obs)):
        raise AgentError(f"observation must be finite with length {policy.network.n_in}")
    return greedy_action(nc.forward(policy.network, obs)[0])


def bellman_targets(target_net: nc.DenseNetwork, rewards, next_obs, dones, gamma: float) -> np.ndarray:
    """``r + gamma * (1 - done) * max_a' Q_target(s', a')``."""
    q_next = nc.forward(target_net, next_obs).max(axis=1)
    return rewards + gamma * (1.0 - dones) * q_next


def q_update(online: nc.DenseNetwork, target: nc.DenseNetwork, batch, gamma: float,
             cfg: AgentConfig, opt: nc.AdamState) -> float:
    """One gradient step of ``Q_online(s, a)`` toward the Bellman target."""
    obs, actions, rewards, next_obs, dones = batch
    y = bellman_targets(target, rewards, next_obs, dones, gamma)
    n = obs.shape[0]
    targets = np.zeros((n, online.n_out))
    mask = np.zeros((n, online.n_out))
    targets[np.arange(n), actions] = y
    mask[np.arange(n), actions] = 1.0
    loss, tape = nc.backward(online, obs, "huber", targets, delta=cfg.huber_delta, mask=mask)
    if not math.isfinite(loss):
        raise AgentError("non-finite loss")
    nc.sgd_step(online, tape, cfg.learning_rate, opt)
    return loss


def train(env_factory, cfg: AgentConfig, metadata: dict | None = None) -> tuple[Policy, TrainingStats]:
    """Train a Q-network on the environment built by ``env_factory()``.

    Gradient steps start after ``learning_starts`` environment steps and run
    every ``train_freq`` steps; the target network is copied from the online
    network every ``target_update_interval`` steps. With a positive
    ``checkpoint_interval`` the online network is rolled out greedily every
    that many steps and the best-returning snapshot is kept.
    """
    cfg.validate()
    env = env_factory()
    obs_dim, n_actions = env.obs_dim, env.n_actions
    gamma = getattr(env, "gamma", 1.0)
    rng = np.random.default_rng(cfg.seed)
    net_seed = int(rng.integers(2**31))
    online = nc.init_network((obs_dim, *cfg.hidden, n_actions), net_seed)
    target = online.copy()
    opt = nc.AdamState()
    buffer = ReplayBuffer(min(cfg.buffer_size, max(cfg.total_steps, cfg.batch_size)), obs_dim)
    stats = TrainingStats(total_steps=cfg.total_steps)

    obs = np.asarray(env.reset(seed=cfg.seed), dtype=float)
    if obs.shape != (obs_dim,):
        raise AgentError(f"observation length {obs.shape} does not match obs_dim {obs_dim}")
    ep_return = 0.0
    losses = []
    for step in range(cfg.total_steps):
        if rng.random() < cfg.epsilon(step):
            action = int(rng.integers(n_actions))
        else:
            action = greedy_action(nc.forward(online, obs)[0])
        next_obs, reward, done = env.step(action)
        buffer.add(obs, action, reward, next_obs, done)
        ep_return += reward
        if done:
            stats.episode_returns.append(ep_return)
            if losses:
                stats.mean_losses.append(float(np.mean(losses)))
                losses = []
            ep_return = 0.0
            obs = np.asarray(env.reset(seed=cfg.seed), dtype=float)
        else:
            obs = np.asarray(next_obs, dtype=float)

        if step >= cfg.learning_starts and step % cfg.train_freq == 0 and len(buffer) >= cfg.batch_size:
            try:
                loss = q_update(online, target, buffer.sample(rng, cfg.batch_size), gamma, cfg, opt)
            except (nc.NetworkError, AgentError) as exc:
                raise AgentError(
                    f"training diverged at step {step} (update {stats.n_updates}): {exc}"
                ) from exc
            losses.append(loss)
            stats.n_updates += 1
        if (step + 1) % cfg.target_update_interval == 0:
            target.load_from(online)
            stats.n_target_syncs += 1
        if cfg.checkpoint_interval and (step + 1) % cfg.checkpoint_interval == 0 and step >= cfg.learning_starts:
            ret = greedy_return(online, env_factory())
            if stats.best_return is None or ret > stats.best_return:
                stats.best_return, stats.best_step, best = ret, step + 1, online.copy()
    if losses:
        stats.mean_losses.append(float(np.mean(losses)))

    meta = dict(metadata or {})
    meta["agent_config"] = asdict(cfg)
    final = best if stats.best_return is not None else online
    return Policy(final, meta), stats


def greedy_return(net: nc.DenseNetwork, env) -> float:
    """Undiscounted return of one greedy episode of ``net``."""
    obs = env.reset()
    done = False
    total = 0.0
    while not done:
        obs, r, done = env.step(greedy_action(nc.forward(net, obs)[0]))
        total += r
    return total


@dataclass
class EvaluationTrace:
    actions: np.ndarray
    rewards: np.ndarray
    predictions: np.ndarray
    truth: np.ndarray
    episode_return: float

    def exact_return(self) -> Fraction:
        """Sum of the rewards in exact rational arithmetic."""
        return sum((Fraction(float(r)) for r in self.rewards), Fraction(0))


def evaluate_policy(policy: Policy, env) -> EvaluationTrace:
    """One greedy pass over the environment, no exploration."""
    obs = env.reset()
    actions, rewards, preds = [], [], []
    truth = []
    done = False
    while not done:
        t = env.cursor
        a = act_greedy(policy, obs)
        preds.append(env.prediction(t, a))
        truth.append(env.truth_at(t))
        obs, r, done = env.step(a)
        actions.append(a)
        rewards.append(r)
    return EvaluationTrace(np.array(actions), np.array(rewards), np.array(preds, dtype=np.int8),
                           np.array(truth, dtype=np.int8), float(env.episode_return))


# ---------------------------------------------------------------- serialization

def policy_to_json(policy: Policy) -> str:
    doc = {
        "format": "rlmsad-policy",
        "format_version": POLICY_FORMAT_VERSION,
        "network": nc.network_to_dict(policy.network),
        "metadata": policy.metadata,
    }
    return json.dumps(doc, sort_keys=True, default=_jsonable)


def policy_from_json(text: str) -> Policy:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise AgentError(f"corrupt policy document: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != "rlmsad-policy":
        raise AgentError("not a policy document")
    if doc.get("format_version") != POLICY_FORMAT_VERSION:
        raise AgentError(f"unsupported policy format_version {doc.get('format_version')!r}")
    return Policy(nc.network_from_dict(doc["network"]), doc.get("metadata", {}))


def _jsonable(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (tuple, set)):
        return list(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")
