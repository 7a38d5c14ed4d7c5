"""Linear one-class SVM fitted by averaged mini-batch subgradient descent.

Objective (per sample mean)::

    0.5 * |w|^2 - rho + (1 / nu) * mean(max(0, rho - w.x))

Training points with ``w.x < rho`` fall outside the normal half-space; the
anomaly score is ``rho - w.x``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import DetectorError


@dataclass(frozen=True)
class LinearOcsvmModel:
    w: np.ndarray
    rho: float
    nu: float


def fit_ocsvm(X, rng, nu: float = 0.5, learning_rate: float = 0.05,
              epochs: int = 30, batch_size: int = 32) -> LinearOcsvmModel:
    X = np.asarray(X, dtype=float)
    if not 0.0 < nu <= 1.0:
        raise DetectorError(f"nu must lie in (0, 1], got {nu}")
    if learning_rate <= 0 or epochs < 1 or batch_size < 1:
        raise DetectorError("learning_rate, epochs and batch_size must be positive")
    n, d = X.shape
    w = np.zeros(d)
    rho = 0.0
    w_avg = np.zeros(d)
    rho_avg = 0.0
    steps = 0
    for epoch in range(epochs):
        lr = learning_rate / np.sqrt(1.0 + epoch)
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            B = X[order[start:start + batch_size]]
            active = (rho - B @ w) > 0
            frac = active.mean()
            gw = w - (B[active].sum(axis=0) / B.shape[0]) / nu
            grho = -1.0 + frac / nu
            w -= lr * gw
            rho -= lr * grho
            steps += 1
            w_avg += (w - w_avg) / steps
            rho_avg += (rho - rho_avg) / steps
    if not (np.all(np.isfinite(w_avg)) and np.isfinite(rho_avg)):
        raise DetectorError("one-class SVM training diverged")
    return LinearOcsvmModel(w_avg, float(rho_avg), float(nu))


def ocsvm_scores(model: LinearOcsvmModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.w.shape[0]:
        raise DetectorError(f"expected {model.w.shape[0]} features, got shape {X.shape}")
    return model.rho - X @ model.w
