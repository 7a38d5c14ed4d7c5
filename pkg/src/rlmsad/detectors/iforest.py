"""Isolation forest with array-backed trees.

Each tree is grown on a subsample of ``psi`` rows drawn without replacement,
splitting on a random non-constant feature at a value drawn uniformly between
that feature's min and max in the node, up to depth ``ceil(log2 psi)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .base import DetectorError

EULER_GAMMA = 0.5772156649


def harmonic(k: float) -> float:
    return math.log(k) + EULER_GAMMA


def average_path_length(n: int) -> float:
    """Expected unsuccessful-search path length in a BST of ``n`` nodes."""
    if n <= 1:
        return 0.0
    if n == 2:
        return 1.0
    return 2.0 * harmonic(n - 1) - 2.0 * (n - 1) / n


@dataclass(frozen=True)
class IsolationTree:
    # per node; leaves have feature == -1
    feature: np.ndarray
    split: np.ndarray
    left: np.ndarray
    right: np.ndarray
    size: np.ndarray
    depth: np.ndarray

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist()
                for k in ("feature", "split", "left", "right", "size", "depth")}

    @classmethod
    def from_dict(cls, doc):
        ints = {k: np.array(doc[k], dtype=np.int64) for k in ("feature", "left", "right", "size", "depth")}
        return cls(split=np.array(doc["split"], dtype=float), **ints)


@dataclass(frozen=True)
class IsolationForestModel:
    trees: tuple[IsolationTree, ...]
    psi: int
    height_limit: int
    n_features: int


def _grow(X, rng, height_limit):
    feature, split, left, right, size, depth = [], [], [], [], [], []

    def new_node(n, dep):
        feature.append(-1); split.append(0.0); left.append(-1); right.append(-1)
        size.append(n); depth.append(dep)
        return len(feature) - 1

    root = new_node(X.shape[0], 0)
    stack = [(root, np.arange(X.shape[0]))]
    while stack:
        node, idx = stack.pop()
        dep = depth[node]
        if dep >= height_limit or idx.size <= 1:
            continue
        sub = X[idx]
        lo, hi = sub.min(axis=0), sub.max(axis=0)
        candidates = np.flatnonzero(hi > lo)
        if candidates.size == 0:
            continue
        f = int(candidates[rng.integers(candidates.size)])
        v = float(rng.uniform(lo[f], hi[f]))
        go_left = sub[:, f] < v
        li, ri = idx[go_left], idx[~go_left]
        feature[node] = f
        split[node] = v
        left[node] = new_node(li.size, dep + 1)
        right[node] = new_node(ri.size, dep + 1)
        stack.append((right[node], ri))
        stack.append((left[node], li))

    return IsolationTree(np.array(feature), np.array(split), np.array(left),
                         np.array(right), np.array(size), np.array(depth))


def fit_iforest(X, rng, n_trees: int = 100, max_samples: int = 256) -> IsolationForestModel:
    X = np.asarray(X, dtype=float)
    if n_trees < 1 or max_samples < 2:
        raise DetectorError("iforest needs n_trees >= 1 and max_samples >= 2")
    n = X.shape[0]
    psi = min(int(max_samples), n)
    height = max(1, math.ceil(math.log2(psi)))
    trees = []
    for _ in range(n_trees):
        idx = rng.choice(n, size=psi, replace=False) if psi < n else np.arange(n)
        trees.append(_grow(X[idx], rng, height))
    return IsolationForestModel(tuple(trees), psi, height, X.shape[1])


def path_lengths(tree: IsolationTree, X: np.ndarray) -> np.ndarray:
    node = np.zeros(X.shape[0], dtype=np.int64)
    rows = np.arange(X.shape[0])
    while True:
        f = tree.feature[node]
        inner = f >= 0
        if not inner.any():
            break
        nd, r = node[inner], rows[inner]
        go_left = X[r, tree.feature[nd]] < tree.split[nd]
        node[inner] = np.where(go_left, tree.left[nd], tree.right[nd])
    c_leaf = np.array([average_path_length(int(s)) for s in tree.size])
    return tree.depth[node] + c_leaf[node]


def iforest_scores(model: IsolationForestModel, X) -> np.ndarray:
    """``2 ** (-E[h(x)] / c(psi))``; values near 1 are easy to isolate."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise DetectorError(f"expected {model.n_features} features, got shape {X.shape}")
    mean_h = np.mean([path_lengths(t, X) for t in model.trees], axis=0)
    c = average_path_length(model.psi)
    if c == 0:
        return np.full(X.shape[0], 0.5)
    return 2.0 ** (-mean_h / c)
