"""Fit the detector pool, score a test sequence, and store the results.

All detectors are aligned on the same target timesteps: with a largest
window ``W`` the first ``W - 1`` test rows only serve as context.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import confidence
from . import detectors as det
from .dataio import DataError, TimeSeries, apply_scaler, downsample, fit_scaler, make_windows

SCORE_FORMAT = "rlmsad-scores"
SCORE_FORMAT_VERSION = 1
STATE_FEATURES = ("scaled_score", "scaled_threshold", "predicted_label",
                  "dt_confidence", "pc_confidence")


@dataclass(frozen=True)
class PoolOutputs:
    """Thresholded outputs of every pool member over one test sequence."""

    kinds: tuple[det.DetectorKind, ...]
    outputs: tuple[det.DetectorOutput, ...]
    truth: np.ndarray
    timesteps: np.ndarray

    def __post_init__(self):
        if len(self.kinds) != len(self.outputs):
            raise ValueError("kinds and outputs differ in length")
        if len(self.kinds) < 2:
            raise ValueError("pool size must be at least 2")
        T = len(self.truth)
        if T == 0:
            raise ValueError("empty test sequence")
        if any(len(o) != T for o in self.outputs) or len(self.timesteps) != T:
            raise ValueError("pool outputs are not aligned with the truth labels")

    @property
    def size(self) -> int:
        return len(self.kinds)

    @property
    def length(self) -> int:
        return len(self.truth)

    def labels(self) -> np.ndarray:
        """``(T, M)`` binary labels."""
        return np.stack([o.labels for o in self.outputs], axis=1)

    def state_table(self) -> np.ndarray:
        """``(T, M, 5)`` state variables of every detector at every timestep,
        in the order of :data:`STATE_FEATURES`."""
        raw = np.stack([o.raw_scores for o in self.outputs], axis=1)
        scaled = np.stack([o.scaled_scores for o in self.outputs], axis=1)
        thr_scaled = np.array([o.threshold_scaled for o in self.outputs])
        thr = np.array([o.threshold_raw for o in self.outputs])
        lo = np.array([o.score_min for o in self.outputs])
        hi = np.array([o.score_max for o in self.outputs])
        labels = self.labels()
        dt = confidence.distance_to_threshold_matrix(raw, thr, lo, hi)
        pc = confidence.prediction_consensus_matrix(labels)
        return np.stack(
            [scaled, np.broadcast_to(thr_scaled, scaled.shape), labels.astype(float), dt, pc],
            axis=2,
        )


# ---------------------------------------------------------------- pipeline

def preprocess(train: TimeSeries, test: TimeSeries, block: int = 5) -> tuple[TimeSeries, TimeSeries]:
    """Downsample both series, then min-max scale with training statistics."""
    if test.labels is None:
        raise DataError("test series needs ground-truth labels")
    if train.n_features != test.n_features:
        raise DataError(f"train has {train.n_features} features, test has {test.n_features}")
    train = downsample(train, block)
    test = downsample(test, block)
    scaler = fit_scaler(train)
    return apply_scaler(scaler, train), apply_scaler(scaler, test)


def detector_seed(seed: int, position: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(position)]).generate_state(1)[0])


def fit_pool(train: TimeSeries, kinds, hyper: dict | None = None, seed: int = 0,
             timings: dict | None = None) -> list[det.FittedDetector]:
    kinds = det.check_pool(kinds)
    hyper = hyper or {}
    fitted = []
    for k, kind in enumerate(kinds):
        hp = hyper.get(kind, hyper.get(kind.value))
        W = det.window_length_for(kind, hp)
        t0 = time.perf_counter()
        try:
            fitted.append(det.fit(kind, make_windows(train, W), hp, detector_seed(seed, k)))
        except (det.DetectorError, DataError) as exc:
            raise det.DetectorError(f"fitting {kind} failed: {exc}") from exc
        if timings is not None:
            timings[kind.value] = time.perf_counter() - t0
    return fitted


def score_pool(fitted, test: TimeSeries, contamination: float = 0.12) -> PoolOutputs:
    if test.labels is None:
        raise DataError("test series needs ground-truth labels")
    W_max = max(f.window_length for f in fitted)
    if W_max > test.n_timesteps:
        raise DataError(f"test series shorter than the largest window ({W_max})")
    outputs = []
    for f in fitted:
        raw = det.score(f, make_windows(test, f.window_length))
        raw = raw[W_max - f.window_length:]
        outputs.append(det.threshold_scores(raw, contamination))
    truth = np.asarray(test.labels[W_max - 1:], dtype=np.int8)
    return PoolOutputs(tuple(f.kind for f in fitted), tuple(outputs), truth,
                       np.asarray(test.timestep_index[W_max - 1:]))


def build_pool(train: TimeSeries, test: TimeSeries, kinds=det.DEFAULT_POOL, hyper=None,
               seed: int = 0, contamination: float = 0.12, block: int = 5) -> PoolOutputs:
    """Preprocess, fit every detector and score the test sequence."""
    tr, te = preprocess(train, test, block)
    return score_pool(fit_pool(tr, kinds, hyper, seed), te, contamination)


# ---------------------------------------------------------------- score file

def write_scores(pool: PoolOutputs, path) -> None:
    """Columnar CSV: a ``#`` header block with per-detector thresholds and
    score ranges, then ``timestep,truth`` and raw/scaled/label per detector."""
    names = [k.value for k in pool.kinds]
    lines = [
        f"# format: {SCORE_FORMAT}",
        f"# format_version: {SCORE_FORMAT_VERSION}",
        "# kinds: " + ",".join(names),
        "# threshold_raw: " + ",".join(repr(o.threshold_raw) for o in pool.outputs),
        "# threshold_scaled: " + ",".join(repr(o.threshold_scaled) for o in pool.outputs),
        "# score_min: " + ",".join(repr(o.score_min) for o in pool.outputs),
        "# score_max: " + ",".join(repr(o.score_max) for o in pool.outputs),
    ]
    header = ["timestep", "truth"]
    for n in names:
        header += [f"{n}_raw", f"{n}_scaled", f"{n}_label"]
    lines.append(",".join(header))
    for t in range(pool.length):
        row = [str(int(pool.timesteps[t])), str(int(pool.truth[t]))]
        for o in pool.outputs:
            row += [repr(float(o.raw_scores[t])), repr(float(o.scaled_scores[t])), str(int(o.labels[t]))]
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_scores(path) -> PoolOutputs:
    """Inverse of :func:`write_scores`; stored labels must agree with the
    stored raw thresholds."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"{path}: score file not found")
    meta = {}
    rows = []
    header = None
    for line in path.read_text(encoding="utf-8").splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].partition(":")
            meta[key.strip()] = value.strip()
        elif header is None:
            header = line.split(",")
        elif line:
            rows.append(line.split(","))
    if meta.get("format") != SCORE_FORMAT:
        raise DataError(f"{path}: not a score file")
    if meta.get("format_version") != str(SCORE_FORMAT_VERSION):
        raise DataError(f"{path}: unsupported score format_version {meta.get('format_version')!r}")
    try:
        kinds = det.check_pool(meta["kinds"].split(","))
        floats = {k: [float(v) for v in meta[k].split(",")]
                  for k in ("threshold_raw", "threshold_scaled", "score_min", "score_max")}
        data = np.array(rows, dtype=float)
    except (KeyError, ValueError) as exc:
        raise DataError(f"{path}: corrupt score file: {exc}") from None
    M = len(kinds)
    if header is None or len(header) != 2 + 3 * M or data.ndim != 2 or data.shape[1] != 2 + 3 * M:
        raise DataError(f"{path}: expected {2 + 3 * M} columns")
    outputs = []
    for m in range(M):
        raw = data[:, 2 + 3 * m]
        labels = data[:, 4 + 3 * m].astype(np.int8)
        thr = floats["threshold_raw"][m]
        if not np.array_equal(labels, (raw > thr).astype(np.int8)):
            raise DataError(f"{path}: {kinds[m]} labels disagree with the stored threshold")
        o = det.DetectorOutput(raw, thr, data[:, 3 + 3 * m], floats["threshold_scaled"][m], labels,
                               floats["score_min"][m], floats["score_max"][m])
        outputs.append(o)
    return PoolOutputs(kinds, tuple(outputs), data[:, 1].astype(np.int8), data[:, 0].astype(np.int64))

