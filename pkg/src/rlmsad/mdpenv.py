"""Detector-selection environment.

At timestep ``t`` the agent observes the state variables of the detector it
selected at ``t - 1`` (detector 0 right after reset), evaluated at ``t``. Its
action picks the detector whose label becomes the prediction for ``t`` and
whose state is observed at ``t + 1``. Transitions follow time order and the
return is undiscounted.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .pool import STATE_FEATURES, PoolOutputs

GAMMA = 1.0

MASKS = {
    "full": STATE_FEATURES,
    "drop_dt": tuple(f for f in STATE_FEATURES if f != "dt_confidence"),
    "drop_pc": tuple(f for f in STATE_FEATURES if f != "pc_confidence"),
}


class EnvError(ValueError):
    pass


def resolve_mask(mask) -> tuple[str, ...]:
    """A mask is a name from :data:`MASKS` or an explicit feature subset."""
    if isinstance(mask, str):
        if mask not in MASKS:
            raise EnvError(f"unknown mask {mask!r}; known: {', '.join(MASKS)}")
        return MASKS[mask]
    feats = tuple(mask)
    unknown = [f for f in feats if f not in STATE_FEATURES]
    if unknown or not feats:
        raise EnvError(f"invalid mask features {feats}")
    # keep canonical order so observation layouts agree across configs
    return tuple(f for f in STATE_FEATURES if f in feats)


@dataclass(frozen=True)
class RewardConfig:
    """Reward magnitudes: ``tp`` and ``tn`` are paid, ``fp`` and ``fn`` are
    charged (``r1..r4``)."""

    tp: float = 1.0
    tn: float = 0.1
    fp: float = 0.4
    fn: float = 1.5

    def violations(self) -> list[str]:
        out = []
        for name in ("tp", "tn", "fp", "fn"):
            if not getattr(self, name) > 0:
                out.append(f"{name} > 0")
        if not self.tp > self.tn:
            out.append("r1 > r2")
        if not self.fn > self.fp:
            out.append("r4 > r3")
        return out

    def reward(self, pred: int, truth: int) -> float:
        if pred == 1:
            return self.tp if truth == 1 else -self.fp
        return self.tn if truth == 0 else -self.fn


def validate_reward_config(cfg: RewardConfig) -> list[str]:
    """Violated constraints by name (``"r1 > r2"``, ``"r4 > r3"``); empty when ok."""
    return cfg.violations()


@dataclass(frozen=True)
class Transition:
    observation: np.ndarray
    action: int
    reward: float
    next_observation: np.ndarray
    done: bool


class DetectorSelectionEnv:
    """Gym-style environment over a scored pool.

    ``reset()`` returns the first observation; ``step(action)`` returns
    ``(next_obs, reward, done)``.
    """

    def __init__(self, pool: PoolOutputs, rewards: RewardConfig | None = None, mask="full"):
        rewards = rewards or RewardConfig()
        bad = rewards.violations()
        if bad:
            raise EnvError("reward constraints violated: " + ", ".join(bad))
        if pool.size < 2:
            raise EnvError("pool size must be at least 2")
        if pool.length == 0:
            raise EnvError("empty test sequence")
        self.pool = pool
        self.rewards = rewards
        self.mask = resolve_mask(mask)
        cols = [STATE_FEATURES.index(f) for f in self.mask]
        self._obs = np.ascontiguousarray(pool.state_table()[:, :, cols])
        self._obs.setflags(write=False)
        self._labels = pool.labels()
        self._truth = np.asarray(pool.truth)
        # reward lookup indexed by [pred, truth]
        self._reward_table = ((rewards.tn, -rewards.fn), (-rewards.fp, rewards.tp))
        self.n_actions = pool.size
        self.obs_dim = len(self.mask)
        self.episode_length = pool.length
        self.gamma = GAMMA
        self.cursor = 0
        self.selected = 0
        self.episode_return = 0.0
        self.done = True

    def reset(self, seed: int | None = None) -> np.ndarray:
        # transitions are deterministic; the seed is accepted for interface parity
        self.cursor = 0
        self.selected = 0
        self.episode_return = 0.0
        self.done = False
        return self._obs[0, 0]

    def observation(self) -> np.ndarray:
        t = min(self.cursor, self.episode_length - 1)
        return self._obs[t, self.selected]

    def step(self, action: int):
        if self.done:
            raise EnvError("step() called on a finished episode; call reset()")
        a = int(action)
        if not 0 <= a < self.n_actions:
            raise EnvError(f"action {action} outside [0, {self.n_actions})")
        t = self.cursor
        pred = int(self._labels[t, a])
        r = self._reward_table[pred][int(self._truth[t])]
        self.episode_return += r
        self.cursor = t + 1
        self.selected = a
        self.done = self.cursor >= self.episode_length
        # terminal observation repeats the last timestep; it is never bootstrapped
        nxt = self._obs[min(self.cursor, self.episode_length - 1), a]
        return nxt, r, self.done

    def prediction(self, t: int, action: int) -> int:
        return int(self._labels[t, action])

    def truth_at(self, t: int) -> int:
        return int(self._truth[t])


def write_trace(path, actions, rewards, truth, predictions) -> None:
    """Episode trace CSV: ``timestep,action,reward,truth,prediction``."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestep", "action", "reward", "truth", "prediction"])
        for t, (a, r, y, p) in enumerate(zip(actions, rewards, truth, predictions)):
            w.writerow([t, int(a), repr(float(r)), int(y), int(p)])
