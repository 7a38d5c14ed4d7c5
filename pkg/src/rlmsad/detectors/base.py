"""Shared detector types: kinds, errors and score thresholding."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

MIN_TRAIN_ROWS = 8
FORMAT_VERSION = 1


class DetectorError(ValueError):
    pass


class DetectorKind(str, enum.Enum):
    IFOREST = "iforest"
    OCSVM_SGD = "ocsvm_sgd"
    ECOD = "ecod"
    COPOD = "copod"
    AUTOENCODER = "autoencoder"

    def __str__(self):
        return self.value


DEFAULT_POOL = tuple(DetectorKind)


def check_pool(kinds) -> tuple[DetectorKind, ...]:
    """Normalise a pool spec; each kind at most once, at least two kinds."""
    try:
        pool = tuple(DetectorKind(k) for k in kinds)
    except ValueError as exc:
        raise DetectorError(str(exc)) from None
    if len(pool) < 2:
        raise DetectorError(f"pool needs at least two detectors, got {len(pool)}")
    if len(set(pool)) != len(pool):
        raise DetectorError("pool lists a detector kind more than once")
    return pool


@dataclass(frozen=True)
class DetectorOutput:
    """Scores of one detector over a test sequence, thresholded.

    ``labels[i] == 1`` iff ``raw_scores[i] > threshold_raw``. Scaled fields
    are min-max scaled over the sequence; an all-equal sequence scales to 0.5.
    """

    raw_scores: np.ndarray
    threshold_raw: float
    scaled_scores: np.ndarray
    threshold_scaled: float
    labels: np.ndarray
    score_min: float
    score_max: float

    def __len__(self):
        return self.raw_scores.shape[0]


def minmax_scale(values, lo: float, hi: float):
    values = np.asarray(values, dtype=float)
    if hi == lo:
        return np.full_like(values, 0.5) if values.ndim else 0.5
    return (values - lo) / (hi - lo)


def threshold_scores(raw_scores, contamination: float) -> DetectorOutput:
    """Flag scores strictly above the ``1 - contamination`` quantile.

    The quantile interpolates linearly between order statistics (the usual
    ``(n-1)p`` rule), so on distinct scores about ``contamination * n``
    instances are flagged.
    """
    s = np.array(raw_scores, dtype=float)
    if s.ndim != 1 or s.size == 0:
        raise DetectorError("need a non-empty 1-D score vector")
    if not np.all(np.isfinite(s)):
        raise DetectorError("scores must be finite")
    if not 0.0 < contamination < 1.0:
        raise DetectorError(f"contamination must lie in (0, 1), got {contamination}")
    thr = float(np.quantile(s, 1.0 - contamination, method="linear"))
    lo, hi = float(s.min()), float(s.max())
    labels = (s > thr).astype(np.int8)
    scaled = minmax_scale(s, lo, hi)
    out = DetectorOutput(
        raw_scores=s,
        threshold_raw=thr,
        scaled_scores=scaled,
        threshold_scaled=float(minmax_scale(thr, lo, hi)),
        labels=labels,
        score_min=lo,
        score_max=hi,
    )
    for a in (out.raw_scores, out.scaled_scores, out.labels):
        a.setflags(write=False)
    return out
