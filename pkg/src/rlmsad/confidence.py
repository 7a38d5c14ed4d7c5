"""Per-timestep confidence scores for a detector in the pool."""

from __future__ import annotations

import math

import numpy as np


def distance_to_threshold(score: float, threshold: float, score_max: float, score_min: float) -> float:
    """How far ``score`` sits above ``threshold`` as a fraction of the score
    range. Negative below the threshold; 0 when the range is degenerate."""
    for v in (score, threshold, score_max, score_min):
        if not math.isfinite(v):
            raise ValueError("distance_to_threshold needs finite inputs")
    if score_max < score_min:
        raise ValueError("score_max below score_min")
    span = score_max - score_min
    if span == 0:
        return 0.0
    return (score - threshold) / span


def prediction_consensus(labels, my_label: int) -> float:
    """Fraction of pool members whose label equals ``my_label``; the
    selected detector counts itself."""
    labels = list(labels)
    if not labels:
        raise ValueError("empty pool")
    return sum(1 for x in labels if x == my_label) / len(labels)


def distance_to_threshold_matrix(raw: np.ndarray, thresholds, mins, maxs) -> np.ndarray:
    """Vectorised :func:`distance_to_threshold` over a ``(T, M)`` score
    matrix with per-detector thresholds and ranges."""
    raw = np.asarray(raw, dtype=float)
    thresholds = np.asarray(thresholds, dtype=float)
    span = np.asarray(maxs, dtype=float) - np.asarray(mins, dtype=float)
    safe = np.where(span == 0, 1.0, span)
    return np.where(span == 0, 0.0, (raw - thresholds) / safe)


def prediction_consensus_matrix(labels: np.ndarray) -> np.ndarray:
    """``(T, M)`` consensus of each detector's own label at each timestep."""
    labels = np.asarray(labels)
    M = labels.shape[1]
    ones = labels.sum(axis=1, keepdims=True)
    return np.where(labels == 1, ones, M - ones) / M
