"""Empirical-CDF tail detectors (ECOD and COPOD styles).

Both keep the sorted training column per feature. For a test value ``x`` and
``n`` training values the tail probabilities are

    left(x)  = max(#{train <= x} / n, 1 / (n + 1))
    right(x) = max(#{train >= x} / n, 1 / (n + 1))

so a value beyond the training range gets the floor ``1/(n+1)`` instead of
zero. Scores sum ``-ln(tail)`` over features.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import DetectorError


@dataclass(frozen=True)
class EcdfTables:
    sorted_values: np.ndarray  # (n, d), each column non-decreasing
    skew_sign: np.ndarray      # (d,) in {-1, 0, 1}

    @property
    def n(self) -> int:
        return self.sorted_values.shape[0]

    @property
    def n_features(self) -> int:
        return self.sorted_values.shape[1]


def skewness(X: np.ndarray) -> np.ndarray:
    """Biased (population) sample skewness per column; 0 for constant columns."""
    X = np.asarray(X, dtype=float)
    mu = X.mean(axis=0)
    c = X - mu
    m2 = (c ** 2).mean(axis=0)
    m3 = (c ** 3).mean(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        g = np.where(m2 > 0, m3 / np.where(m2 > 0, m2, 1.0) ** 1.5, 0.0)
    # skew of a symmetric sample is zero up to rounding; keep its sign stable
    g[np.abs(g) < 1e-12] = 0.0
    return g


def fit_tables(X: np.ndarray) -> EcdfTables:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DetectorError("expected a 2-D training matrix")
    return EcdfTables(np.sort(X, axis=0), np.sign(skewness(X)))


def tail_probabilities(tables: EcdfTables, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != tables.n_features:
        raise DetectorError(
            f"expected {tables.n_features} features, got shape {X.shape}"
        )
    n = tables.n
    floor = 1.0 / (n + 1)
    left = np.empty_like(X)
    right = np.empty_like(X)
    for j in range(tables.n_features):
        col = tables.sorted_values[:, j]
        le = np.searchsorted(col, X[:, j], side="right")
        ge = n - np.searchsorted(col, X[:, j], side="left")
        left[:, j] = le / n
        right[:, j] = ge / n
    return np.maximum(left, floor), np.maximum(right, floor)


def ecod_scores(tables: EcdfTables, X) -> np.ndarray:
    """Largest of the left-tail, right-tail and two-sided aggregates."""
    pl, pr = tail_probabilities(tables, X)
    ul, ur = -np.log(pl), -np.log(pr)
    return np.max(
        np.stack([ul.sum(axis=1), ur.sum(axis=1), np.maximum(ul, ur).sum(axis=1)]),
        axis=0,
    )


def copod_scores(tables: EcdfTables, X) -> np.ndarray:
    """Skewness-corrected tail sum: the left tail for negatively skewed
    features, the right tail for positively skewed ones, and the mean of the
    two for symmetric ones."""
    pl, pr = tail_probabilities(tables, X)
    ul, ur = -np.log(pl), -np.log(pr)
    s = tables.skew_sign
    per_feature = np.where(s < 0, ul, np.where(s > 0, ur, 0.5 * (ul + ur)))
    return per_feature.sum(axis=1)


def tables_to_dict(t: EcdfTables) -> dict:
    return {"sorted_values": t.sorted_values.tolist(), "skew_sign": t.skew_sign.tolist()}


def tables_from_dict(doc: dict) -> EcdfTables:
    vals = np.array(doc["sorted_values"], dtype=float)
    if vals.ndim != 2 or np.any(np.diff(vals, axis=0) < 0):
        raise DetectorError("ECDF table columns must be sorted 2-D arrays")
    return EcdfTables(vals, np.array(doc["skew_sign"], dtype=float))
