"""Dense feed-forward networks with hand-written backpropagation and Adam.

Layers are ``relu`` everywhere except the last, which is linear. Weights are
stored as ``(fan_in, fan_out)`` matrices so a batch ``X`` of shape
``(n, fan_in)`` maps to ``X @ W + b``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

FORMAT_VERSION = 1
HIDDEN_ACTIVATION = "relu"
OUTPUT_ACTIVATION = "identity"


class NetworkError(ValueError):
    pass


@dataclass
class DenseNetwork:
    sizes: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        self.sizes = tuple(int(s) for s in self.sizes)
        if len(self.sizes) < 2 or any(s < 1 for s in self.sizes):
            raise NetworkError(f"invalid layer sizes {self.sizes}")
        if len(self.weights) != len(self.sizes) - 1 or len(self.biases) != len(self.weights):
            raise NetworkError("parameter count does not match layer sizes")
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape != (self.sizes[k], self.sizes[k + 1]) or b.shape != (self.sizes[k + 1],):
                raise NetworkError(f"layer {k}: bad parameter shapes {W.shape}, {b.shape}")

    @property
    def n_in(self) -> int:
        return self.sizes[0]

    @property
    def n_out(self) -> int:
        return self.sizes[-1]

    def params(self) -> list[np.ndarray]:
        """Flat parameter list ``[W0, b0, W1, b1, ...]`` (live references)."""
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def copy(self) -> "DenseNetwork":
        return DenseNetwork(self.sizes, [W.copy() for W in self.weights],
                            [b.copy() for b in self.biases])

    def load_from(self, other: "DenseNetwork") -> None:
        """Copy ``other``'s parameters into this network in place."""
        if other.sizes != self.sizes:
            raise NetworkError(f"size mismatch {other.sizes} vs {self.sizes}")
        for dst, src in zip(self.params(), other.params()):
            dst[...] = src

    def __call__(self, batch):
        return forward(self, batch)


@dataclass
class GradientTape:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def params(self) -> list[np.ndarray]:
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def init_network(sizes, seed: int) -> DenseNetwork:
    """Weights ~ U(-a, a) with ``a = sqrt(3 / fan_in)`` (unit variance per
    weight times ``1/sqrt(fan_in)``); biases zero."""
    sizes = tuple(sizes)
    if len(sizes) < 2:
        raise NetworkError("need at least input and output sizes")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        if fan_in < 1 or fan_out < 1:
            raise NetworkError(f"invalid layer sizes {sizes}")
        a = np.sqrt(3.0 / fan_in)
        weights.append(rng.uniform(-a, a, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return DenseNetwork(sizes, weights, biases)


def _check_batch(net: DenseNetwork, batch) -> np.ndarray:
    X = np.asarray(batch, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != net.n_in:
        raise NetworkError(f"expected batch with {net.n_in} columns, got shape {X.shape}")
    return X


def forward(net: DenseNetwork, batch) -> np.ndarray:
    h = _check_batch(net, batch)
    last = len(net.weights) - 1
    for k, (W, b) in enumerate(zip(net.weights, net.biases)):
        h = h @ W + b
        if k < last:
            h = np.maximum(h, 0.0)
    return h


def _forward_cache(net, X):
    acts = [X]
    h = X
    last = len(net.weights) - 1
    for k, (W, b) in enumerate(zip(net.weights, net.biases)):
        h = h @ W + b
        if k < last:
            h = np.maximum(h, 0.0)
        acts.append(h)
    return acts


def backward(net: DenseNetwork, batch, loss_kind: str, targets, delta: float = 1.0,
             mask=None) -> tuple[float, GradientTape]:
    """Loss and exact parameter gradients.

    The loss is the mean of the elementwise loss over all output entries, or
    over the entries where ``mask`` is nonzero when a mask is given (used by
    the Q-learning update to train only the taken action).

    ``loss_kind`` is ``"mse"`` (squared residual) or ``"huber"`` with
    threshold ``delta``.
    """
    X = _check_batch(net, batch)
    Y = np.asarray(targets, dtype=float)
    if Y.ndim == 1:
        Y = Y[None, :]
    acts = _forward_cache(net, X)
    out = acts[-1]
    if Y.shape != out.shape:
        raise NetworkError(f"targets shape {Y.shape} does not match output {out.shape}")
    if mask is None:
        M = np.ones_like(out)
    else:
        M = np.broadcast_to(np.asarray(mask, dtype=float), out.shape)
    count = M.sum()
    if count <= 0:
        raise NetworkError("mask selects no outputs")

    r = (out - Y) * M
    if loss_kind == "mse":
        loss = float((r * r).sum() / count)
        g = 2.0 * r / count
    elif loss_kind == "huber":
        a = np.abs(r)
        quad = a <= delta
        loss = float(np.where(quad, 0.5 * r * r, delta * (a - 0.5 * delta)).sum() / count)
        g = np.where(quad, r, delta * np.sign(r)) / count
    else:
        raise NetworkError(f"unknown loss kind {loss_kind!r}")
    if not np.isfinite(loss):
        raise NetworkError("non-finite loss")

    gW = [None] * len(net.weights)
    gb = [None] * len(net.weights)
    for k in range(len(net.weights) - 1, -1, -1):
        gW[k] = acts[k].T @ g
        gb[k] = g.sum(axis=0)
        if k > 0:
            g = (g @ net.weights[k].T) * (acts[k] > 0)
    return loss, GradientTape(gW, gb)


def sgd_step(net: DenseNetwork, tape: GradientTape, learning_rate: float,
             state: AdamState | None = None) -> DenseNetwork:
    """One bias-corrected Adam update, applied in place; returns ``net``.

    ``state`` carries the moment estimates between calls. Passing ``None``
    takes a single step from fresh moments.
    """
    if not learning_rate > 0:
        raise NetworkError(f"learning rate must be positive, got {learning_rate}")
    if state is None:
        state = AdamState()
    grads = tape.params()
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise NetworkError("non-finite gradient")
    params = net.params()
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= learning_rate * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return net


# ---------------------------------------------------------------- serialization

def network_to_dict(net: DenseNetwork) -> dict:
    return {
        "format": "dense-network",
        "format_version": FORMAT_VERSION,
        "sizes": list(net.sizes),
        "hidden_activation": HIDDEN_ACTIVATION,
        "output_activation": OUTPUT_ACTIVATION,
        "weights": [W.ravel().tolist() for W in net.weights],
        "biases": [b.tolist() for b in net.biases],
    }


def network_from_dict(doc: dict) -> DenseNetwork:
    try:
        if doc.get("format") != "dense-network":
            raise NetworkError("not a dense-network document")
        if doc["format_version"] != FORMAT_VERSION:
            raise NetworkError(
                f"unsupported network format_version {doc['format_version']!r} (expected {FORMAT_VERSION})"
            )
        if doc["hidden_activation"] != HIDDEN_ACTIVATION or doc["output_activation"] != OUTPUT_ACTIVATION:
            raise NetworkError("unsupported activation")
        sizes = tuple(doc["sizes"])
        weights = [np.array(w, dtype=float).reshape(a, b)
                   for w, a, b in zip(doc["weights"], sizes[:-1], sizes[1:])]
        biases = [np.array(b, dtype=float) for b in doc["biases"]]
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, NetworkError):
            raise
        raise NetworkError(f"corrupt network document: {exc}") from None
    return DenseNetwork(sizes, weights, biases)


def dumps(net: DenseNetwork) -> str:
    return json.dumps(network_to_dict(net))


def loads(text: str) -> DenseNetwork:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise NetworkError(f"corrupt network document: {exc}") from None
    return network_from_dict(doc)
