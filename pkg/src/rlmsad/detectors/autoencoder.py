"""Reconstruction autoencoder over flattened windows."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import neuralcore as nc
from .base import DetectorError


@dataclass(frozen=True)
class AutoencoderModel:
    net: nc.DenseNetwork
    window_length: int
    epochs: int

    @property
    def input_dim(self) -> int:
        return self.net.n_in


def fit_autoencoder(X, window_length: int, seed: int, bottleneck: int | None = None,
                    hidden: int | None = None, epochs: int = 40, batch_size: int = 64,
                    learning_rate: float = 1e-3) -> AutoencoderModel:
    """Train a ``D-h-b-h-D`` relu autoencoder on flattened windows ``X``
    (``N x D``) by mini-batch Adam on mean squared reconstruction error."""
    X = np.asarray(X, dtype=float)
    D = X.shape[1]
    if bottleneck is None:
        bottleneck = max(1, D // 4)
    if hidden is None:
        hidden = max(bottleneck, D // 2)
    if not 1 <= bottleneck <= max(1, D // 2):
        raise DetectorError(f"bottleneck must lie in [1, {max(1, D // 2)}], got {bottleneck}")
    if epochs < 1 or batch_size < 1 or learning_rate <= 0:
        raise DetectorError("epochs, batch_size and learning_rate must be positive")
    net = nc.init_network((D, hidden, bottleneck, hidden, D), seed)
    rng = np.random.default_rng(seed + 1)
    state = nc.AdamState()
    n = X.shape[0]
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            B = X[order[start:start + batch_size]]
            _, tape = nc.backward(net, B, "mse", B)
            nc.sgd_step(net, tape, learning_rate, state)
    return AutoencoderModel(net, int(window_length), int(epochs))


def autoencoder_scores(model: AutoencoderModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.input_dim:
        raise DetectorError(f"expected {model.input_dim} inputs, got shape {X.shape}")
    recon = nc.forward(model.net, X)
    return ((recon - X) ** 2).mean(axis=1)
