"""The base-detector pool behind one fit/score interface.

Statistical detectors (iforest, ocsvm_sgd, ecod, copod) consume single rows
(window length 1); the autoencoder consumes flattened windows.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .. import neuralcore as nc
from ..dataio import WindowedDataset
from .autoencoder import AutoencoderModel, autoencoder_scores, fit_autoencoder
from .base import (
    DEFAULT_POOL,
    FORMAT_VERSION,
    MIN_TRAIN_ROWS,
    DetectorError,
    DetectorKind,
    DetectorOutput,
    check_pool,
    minmax_scale,
    threshold_scores,
)
from .ecdf import EcdfTables, copod_scores, ecod_scores, fit_tables, tables_from_dict, tables_to_dict
from .iforest import IsolationForestModel, IsolationTree, fit_iforest, iforest_scores
from .ocsvm import LinearOcsvmModel, fit_ocsvm, ocsvm_scores

__all__ = [
    "DEFAULT_HYPER",
    "DEFAULT_POOL",
    "DetectorError",
    "DetectorKind",
    "DetectorOutput",
    "FittedDetector",
    "check_pool",
    "deserialize",
    "fit",
    "minmax_scale",
    "score",
    "serialize",
    "threshold_scores",
    "window_length_for",
]

DEFAULT_HYPER: dict[DetectorKind, dict[str, Any]] = {
    DetectorKind.IFOREST: {"n_trees": 100, "max_samples": 256},
    DetectorKind.OCSVM_SGD: {"nu": 0.5, "learning_rate": 0.05, "epochs": 30, "batch_size": 32},
    DetectorKind.ECOD: {},
    DetectorKind.COPOD: {},
    DetectorKind.AUTOENCODER: {
        "window": 12, "bottleneck": None, "hidden": None,
        "epochs": 40, "batch_size": 64, "learning_rate": 1e-3,
    },
}


def resolve_hyper(kind, hyper=None) -> dict[str, Any]:
    kind = DetectorKind(kind)
    merged = dict(DEFAULT_HYPER[kind])
    for key, value in (hyper or {}).items():
        if key not in merged:
            raise DetectorError(f"{kind}: unknown hyperparameter {key!r}; known: {sorted(merged)}")
        merged[key] = value
    return merged


def window_length_for(kind, hyper=None) -> int:
    kind = DetectorKind(kind)
    if kind is DetectorKind.AUTOENCODER:
        return int(resolve_hyper(kind, hyper)["window"])
    return 1


@dataclass(frozen=True)
class FittedDetector:
    kind: DetectorKind
    model: Any
    n_features: int
    window_length: int
    hyper: dict = field(default_factory=dict)


def _inputs(kind, data: WindowedDataset, window_length: int) -> np.ndarray:
    if data.window_length != window_length:
        raise DetectorError(
            f"{kind} expects window length {window_length}, got {data.window_length}"
        )
    return data.flat()


def fit(kind, train: WindowedDataset, hyper=None, seed: int = 0) -> FittedDetector:
    """Fit one detector on anomaly-free training windows; deterministic per seed."""
    kind = DetectorKind(kind)
    hp = resolve_hyper(kind, hyper)
    W = window_length_for(kind, hp)
    if W < 1:
        raise DetectorError(f"{kind}: window must be >= 1")
    X = _inputs(kind, train, W)
    if X.shape[0] < MIN_TRAIN_ROWS:
        raise DetectorError(f"{kind}: need at least {MIN_TRAIN_ROWS} training rows, got {X.shape[0]}")
    rng = np.random.default_rng(seed)
    d = train.windows.shape[2]
    if kind is DetectorKind.IFOREST:
        model = fit_iforest(X, rng, int(hp["n_trees"]), int(hp["max_samples"]))
    elif kind is DetectorKind.OCSVM_SGD:
        model = fit_ocsvm(X, rng, float(hp["nu"]), float(hp["learning_rate"]),
                          int(hp["epochs"]), int(hp["batch_size"]))
    elif kind in (DetectorKind.ECOD, DetectorKind.COPOD):
        model = fit_tables(X)
    else:
        model = fit_autoencoder(
            X, W, seed,
            bottleneck=None if hp["bottleneck"] is None else int(hp["bottleneck"]),
            hidden=None if hp["hidden"] is None else int(hp["hidden"]),
            epochs=int(hp["epochs"]), batch_size=int(hp["batch_size"]),
            learning_rate=float(hp["learning_rate"]),
        )
    return FittedDetector(kind, model, d, W, hp)


def score(fitted: FittedDetector, test: WindowedDataset) -> np.ndarray:
    """One finite score per target instance; higher is more anomalous."""
    if test.windows.shape[2] != fitted.n_features:
        raise DetectorError(
            f"{fitted.kind}: fitted on {fitted.n_features} features, got {test.windows.shape[2]}"
        )
    X = _inputs(fitted.kind, test, fitted.window_length)
    kind = fitted.kind
    if kind is DetectorKind.IFOREST:
        s = iforest_scores(fitted.model, X)
    elif kind is DetectorKind.OCSVM_SGD:
        s = ocsvm_scores(fitted.model, X)
    elif kind is DetectorKind.ECOD:
        s = ecod_scores(fitted.model, X)
    elif kind is DetectorKind.COPOD:
        s = copod_scores(fitted.model, X)
    else:
        s = autoencoder_scores(fitted.model, X)
    if not np.all(np.isfinite(s)):
        raise DetectorError(f"{kind}: non-finite scores")
    return s


# ---------------------------------------------------------------- serialization

def _model_to_dict(kind, model) -> dict:
    if kind is DetectorKind.IFOREST:
        return {"psi": model.psi, "height_limit": model.height_limit,
                "n_features": model.n_features, "trees": [t.to_dict() for t in model.trees]}
    if kind is DetectorKind.OCSVM_SGD:
        return {"w": model.w.tolist(), "rho": model.rho, "nu": model.nu}
    if kind in (DetectorKind.ECOD, DetectorKind.COPOD):
        return tables_to_dict(model)
    return {"window_length": model.window_length, "epochs": model.epochs,
            "network": nc.network_to_dict(model.net)}


def _model_from_dict(kind, doc):
    if kind is DetectorKind.IFOREST:
        return IsolationForestModel(tuple(IsolationTree.from_dict(t) for t in doc["trees"]),
                                    int(doc["psi"]), int(doc["height_limit"]), int(doc["n_features"]))
    if kind is DetectorKind.OCSVM_SGD:
        return LinearOcsvmModel(np.array(doc["w"], dtype=float), float(doc["rho"]), float(doc["nu"]))
    if kind in (DetectorKind.ECOD, DetectorKind.COPOD):
        return tables_from_dict(doc)
    return AutoencoderModel(nc.network_from_dict(doc["network"]),
                            int(doc["window_length"]), int(doc["epochs"]))


def serialize(fitted: FittedDetector) -> str:
    doc = {
        "format": "rlmsad-detector",
        "format_version": FORMAT_VERSION,
        "kind": fitted.kind.value,
        "n_features": fitted.n_features,
        "window_length": fitted.window_length,
        "hyper": fitted.hyper,
        "model": _model_to_dict(fitted.kind, fitted.model),
    }
    return json.dumps(doc, sort_keys=True)


def deserialize(text: str) -> FittedDetector:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DetectorError(f"corrupt detector document: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != "rlmsad-detector":
        raise DetectorError("not a detector document")
    version = doc.get("format_version")
    if str(version) != str(FORMAT_VERSION):
        raise DetectorError(f"unsupported detector format_version {version!r} (expected {FORMAT_VERSION})")
    try:
        kind = DetectorKind(doc["kind"])
        model = _model_from_dict(kind, doc["model"])
        return FittedDetector(kind, model, int(doc["n_features"]), int(doc["window_length"]),
                              dict(doc["hyper"]))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, DetectorError):
            raise
        raise DetectorError(f"corrupt detector document: {exc}") from None
