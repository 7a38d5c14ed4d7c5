"""Small fixtures shared by several test modules."""

import numpy as np

from rlmsad import detectors as det
from rlmsad.pool import PoolOutputs


def pool_from_scores(scores, truth, contamination=0.12, kinds=None):
    """PoolOutputs from a ``(T, M)`` raw score matrix."""
    scores = np.asarray(scores, dtype=float)
    M = scores.shape[1]
    kinds = kinds or tuple(det.DEFAULT_POOL[:M])
    outs = tuple(det.threshold_scores(scores[:, m], contamination) for m in range(M))
    truth = np.asarray(truth, dtype=np.int8)
    return PoolOutputs(kinds, outs, truth, np.arange(len(truth)))


def pool_from_labels(labels, truth):
    """PoolOutputs whose thresholded labels equal ``labels`` exactly."""
    labels = np.asarray(labels)
    # scores 0/1 with a threshold strictly between them
    outs = []
    for m in range(labels.shape[1]):
        s = labels[:, m].astype(float)
        outs.append(det.DetectorOutput(
            raw_scores=s, threshold_raw=0.5, scaled_scores=s, threshold_scaled=0.5,
            labels=labels[:, m].astype(np.int8), score_min=0.0, score_max=1.0))
    truth = np.asarray(truth, dtype=np.int8)
    return PoolOutputs(tuple(det.DEFAULT_POOL[:labels.shape[1]]), tuple(outs), truth,
                       np.arange(len(truth)))
