"""Loading, preprocessing and synthetic generation of multivariate time series.

A series is a ``T x d`` float matrix with optional binary labels (1 marks an
anomalous timestep). Everything here returns fresh immutable containers; the
arrays inside are flagged read-only so they can be shared across runs.
"""

from __future__ import annotations

import configparser
import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "DataError",
    "TimeSeries",
    "WindowedDataset",
    "FeatureScaler",
    "SynthConfig",
    "load_csv",
    "write_csv",
    "downsample",
    "make_windows",
    "fit_scaler",
    "apply_scaler",
    "generate_synthetic",
    "load_synth_config",
    "anomaly_segments",
    "PROFILES",
]

SCALE_LOW = -0.05
SCALE_HIGH = 1.05
PROFILES = ("spike", "shift", "drift")


class DataError(ValueError):
    """Malformed input data or invalid preprocessing request."""


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TimeSeries:
    values: np.ndarray
    labels: np.ndarray | None = None
    feature_names: tuple[str, ...] = ()
    timestep_index: np.ndarray | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise DataError(f"values must be a non-empty 2-D array, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise DataError("values contain NaN or Inf")
        object.__setattr__(self, "values", _frozen(values))
        T, d = values.shape
        if self.labels is not None:
            labels = np.asarray(self.labels)
            if labels.shape != (T,):
                raise DataError(f"labels must have length {T}, got shape {labels.shape}")
            if not np.all((labels == 0) | (labels == 1)):
                raise DataError("labels must be 0 or 1")
            object.__setattr__(self, "labels", _frozen(labels, dtype=np.int8))
        names = tuple(self.feature_names) or tuple(f"f{j}" for j in range(d))
        if len(names) != d:
            raise DataError(f"expected {d} feature names, got {len(names)}")
        object.__setattr__(self, "feature_names", names)
        idx = np.arange(T) if self.timestep_index is None else np.asarray(self.timestep_index)
        if idx.shape != (T,) or np.any(np.diff(idx) <= 0):
            raise DataError("timestep_index must be strictly increasing with length T")
        object.__setattr__(self, "timestep_index", _frozen(idx, dtype=np.int64))

    @property
    def n_timesteps(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class WindowedDataset:
    windows: np.ndarray
    targets_index: np.ndarray
    target_labels: np.ndarray | None
    window_length: int

    @property
    def flattened_dim(self) -> int:
        return self.windows.shape[1] * self.windows.shape[2]

    @property
    def n_windows(self) -> int:
        return self.windows.shape[0]

    def flat(self) -> np.ndarray:
        """Windows reshaped to ``N x (W*d)``, oldest row first."""
        return self.windows.reshape(self.windows.shape[0], -1)

    def targets(self) -> np.ndarray:
        """The target (last) row of every window, ``N x d``."""
        return self.windows[:, -1, :]


@dataclass(frozen=True)
class FeatureScaler:
    minimum: np.ndarray
    maximum: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "minimum", _frozen(self.minimum))
        object.__setattr__(self, "maximum", _frozen(self.maximum))
        if np.any(self.maximum < self.minimum):
            raise DataError("scaler maximum below minimum")

    def transform(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        span = self.maximum - self.minimum
        degenerate = span == 0
        safe = np.where(degenerate, 1.0, span)
        out = (values - self.minimum) / safe
        out = np.clip(out, SCALE_LOW, SCALE_HIGH)
        return np.where(degenerate, 0.5, out)

    def inverse(self, scaled: np.ndarray) -> np.ndarray:
        span = self.maximum - self.minimum
        return np.asarray(scaled, dtype=float) * span + self.minimum


# ---------------------------------------------------------------- CSV

def load_csv(path, label_column: str | None = None) -> TimeSeries:
    """Read a headered CSV of numeric columns.

    Args:
        path: file to read (UTF-8, comma separated, '.' decimals).
        label_column: optional column holding 0/1 labels; it is removed
            from the features.

    Raises:
        DataError: on a missing file, ragged rows, non-finite or
            non-numeric cells, or labels outside {0, 1}. Messages name the
            offending row (1-based, header is row 1) and column.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"{path}: file not found")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    if not body:
        raise DataError(f"{path}: no data rows")
    width = len(header)
    label_pos = None
    if label_column is not None:
        if label_column not in header:
            raise DataError(f"{path}: label column {label_column!r} not in header")
        label_pos = header.index(label_column)

    data = np.empty((len(body), width))
    for i, row in enumerate(body, start=2):
        if len(row) != width:
            raise DataError(f"{path}: row {i} has {len(row)} cells, expected {width}")
        for j, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                raise DataError(f"{path}: row {i}, column {header[j]!r}: non-numeric cell {cell!r}") from None
            if not math.isfinite(v):
                raise DataError(f"{path}: row {i}, column {header[j]!r}: non-finite cell {cell!r}")
            data[i - 2, j] = v

    labels = None
    if label_pos is not None:
        labels = data[:, label_pos]
        bad = np.flatnonzero((labels != 0) & (labels != 1))
        if bad.size:
            r = int(bad[0]) + 2
            raise DataError(f"{path}: row {r}, column {label_column!r}: label {labels[bad[0]]!r} not in {{0,1}}")
        data = np.delete(data, label_pos, axis=1)
        header = header[:label_pos] + header[label_pos + 1:]
    if data.shape[1] == 0:
        raise DataError(f"{path}: no feature columns")
    return TimeSeries(data, labels.astype(np.int8) if labels is not None else None, tuple(header))


def write_csv(series: TimeSeries, path, label_column: str = "label") -> None:
    """Write ``series`` in the format :func:`load_csv` reads; floats use repr
    so a round trip is exact."""
    path = Path(path)
    header = list(series.feature_names)
    if series.labels is not None:
        header.append(label_column)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for t in range(series.n_timesteps):
            row = [repr(float(v)) for v in series.values[t]]
            if series.labels is not None:
                row.append(str(int(series.labels[t])))
            w.writerow(row)


# ---------------------------------------------------------------- preprocessing

def downsample(series: TimeSeries, block: int) -> TimeSeries:
    """Average non-overlapping blocks of ``block`` rows; a trailing partial
    block is dropped. A block is labelled anomalous if any member is."""
    if int(block) != block or block < 1:
        raise DataError(f"block must be a positive integer, got {block!r}")
    block = int(block)
    T = series.n_timesteps
    n = T // block
    if n == 0:
        raise DataError(f"block {block} exceeds series length {T}")
    if block == 1:
        return series
    vals = series.values[: n * block].reshape(n, block, -1).mean(axis=1)
    labels = None
    if series.labels is not None:
        labels = series.labels[: n * block].reshape(n, block).max(axis=1)
    idx = series.timestep_index[: n * block : block]
    return TimeSeries(vals, labels, series.feature_names, idx)


def make_windows(series: TimeSeries, window_length: int) -> WindowedDataset:
    """Stride-1 sliding windows; window ``i`` targets timestep ``i + W - 1``."""
    W = int(window_length)
    T = series.n_timesteps
    if W < 1:
        raise DataError(f"window length must be >= 1, got {window_length}")
    if W > T:
        raise DataError(f"window length {W} exceeds series length {T}")
    view = np.lib.stride_tricks.sliding_window_view(series.values, W, axis=0)
    windows = _frozen(np.transpose(view, (0, 2, 1)))
    targets = _frozen(np.arange(W - 1, T), dtype=np.int64)
    labels = None
    if series.labels is not None:
        labels = _frozen(series.labels[W - 1:], dtype=np.int8)
    return WindowedDataset(windows, targets, labels, W)


def fit_scaler(train: TimeSeries) -> FeatureScaler:
    if train.n_timesteps == 0:
        raise DataError("cannot fit a scaler on an empty series")
    return FeatureScaler(train.values.min(axis=0), train.values.max(axis=0))


def apply_scaler(scaler: FeatureScaler, series: TimeSeries) -> TimeSeries:
    if series.n_features != scaler.minimum.shape[0]:
        raise DataError(
            f"scaler fitted on {scaler.minimum.shape[0]} features, series has {series.n_features}"
        )
    return TimeSeries(scaler.transform(series.values), series.labels,
                      series.feature_names, series.timestep_index)


# ---------------------------------------------------------------- synthetic benchmark

@dataclass(frozen=True)
class SynthConfig:
    """Parameters of the complementary-detector benchmark.

    ``segment_plan`` maps anomaly profile name to a relative weight; the
    anomalous timesteps are split between profiles in those proportions.
    """

    t_train: int = 5000
    t_test: int = 5000
    d: int = 8
    anomaly_rate: float = 0.12
    segment_plan: tuple[tuple[str, float], ...] = (("spike", 1.0), ("drift", 1.0), ("shift", 1.0))
    seed: int = 0
    min_segment: int = 30
    max_segment: int = 80
    period: float = 40.0
    noise: float = 0.08

    def validate(self) -> None:
        if not (0.0 < self.anomaly_rate < 0.5):
            raise DataError(f"anomaly_rate must lie in (0, 0.5), got {self.anomaly_rate}")
        if self.d < 2:
            raise DataError(f"d must be >= 2, got {self.d}")
        if self.t_train < 8 or self.t_test < 8:
            raise DataError("t_train and t_test must be >= 8")
        if not 1 <= self.min_segment <= self.max_segment:
            raise DataError("need 1 <= min_segment <= max_segment")
        if not self.segment_plan:
            raise DataError("segment_plan is empty")
        for name, w in self.segment_plan:
            if name not in PROFILES:
                raise DataError(f"unknown anomaly profile {name!r}; known: {', '.join(PROFILES)}")
            if w <= 0:
                raise DataError(f"segment_plan weight for {name!r} must be positive")
        if self.period <= 2 or self.noise < 0:
            raise DataError("period must exceed 2 and noise must be non-negative")


def parse_segment_plan(text: str) -> tuple[tuple[str, float], ...]:
    """``"spike:1, shift:2"`` -> ``(("spike", 1.0), ("shift", 2.0))``; a bare
    name has weight 1."""
    plan = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        name, _, w = part.partition(":")
        try:
            plan.append((name.strip(), float(w) if w.strip() else 1.0))
        except ValueError:
            raise DataError(f"bad segment_plan entry {part!r}") from None
    return tuple(plan)


_SYNTH_KEYS = {
    "t_train": int, "t_test": int, "d": int, "anomaly_rate": float, "seed": int,
    "min_segment": int, "max_segment": int, "period": float, "noise": float,
    "segment_plan": parse_segment_plan,
}


def synth_config_from_mapping(mapping) -> SynthConfig:
    kwargs = {}
    for key, raw in mapping.items():
        if key not in _SYNTH_KEYS:
            continue
        try:
            kwargs[key] = _SYNTH_KEYS[key](str(raw).strip())
        except ValueError:
            raise DataError(f"synth key {key!r}: cannot parse {raw!r}") from None
    cfg = SynthConfig(**kwargs)
    cfg.validate()
    return cfg


def load_synth_config(path) -> SynthConfig:
    """Read a ``key = value`` file (``#`` comments). A ``[synth]`` or
    ``[dataset]`` section header is optional."""
    text = Path(path).read_text(encoding="utf-8")
    parser = configparser.ConfigParser()
    if not any(line.strip().startswith("[") for line in text.splitlines()):
        text = "[synth]\n" + text
    parser.read_string(text)
    for section in ("synth", "dataset"):
        if parser.has_section(section):
            return synth_config_from_mapping(dict(parser[section]))
    raise DataError(f"{path}: no [synth] or [dataset] section")


def _segment_layout(rng, cfg: SynthConfig):
    """Non-overlapping (start, length, profile) triples covering exactly
    round(rate * T) timesteps."""
    T = cfg.t_test
    total = int(round(cfg.anomaly_rate * T))
    lengths = []
    remaining = total
    while remaining > 0:
        L = int(rng.integers(cfg.min_segment, cfg.max_segment + 1))
        if remaining - L < cfg.min_segment:
            L = remaining if remaining <= cfg.max_segment else remaining - cfg.min_segment
        lengths.append(L)
        remaining -= L
    n = len(lengths)

    names = [p for p, _ in cfg.segment_plan]
    weights = np.array([w for _, w in cfg.segment_plan], dtype=float)
    # largest-remainder apportionment of segments to profiles, then shuffle
    quota = weights / weights.sum() * n
    counts = np.floor(quota).astype(int)
    for k in np.argsort(-(quota - counts), kind="stable")[: n - counts.sum()]:
        counts[k] += 1
    profiles = [names[k] for k in range(len(names)) for _ in range(counts[k])]
    rng.shuffle(profiles)

    free = T - total
    # a lead-in of normal data keeps early windows clean
    lead = min(free // (n + 1), 2 * cfg.max_segment)
    gaps = rng.multinomial(free - lead * (n + 1), np.full(n + 1, 1.0 / (n + 1))) + lead
    segments = []
    t = 0
    for k in range(n):
        t += int(gaps[k])
        segments.append((t, lengths[k], profiles[k]))
        t += lengths[k]
    return segments


def _streams(seed):
    params, layout = np.random.SeedSequence(int(seed)).spawn(2)
    return np.random.default_rng(params), np.random.default_rng(layout)


def anomaly_segments(config: SynthConfig, seed: int | None = None) -> list[tuple[int, int, str]]:
    """The ``(start, length, profile)`` anomaly segments that
    :func:`generate_synthetic` places in the test series for this seed."""
    config.validate()
    return _segment_layout(_streams(config.seed if seed is None else seed)[1], config)


# relative magnitudes of the anomaly profiles
SPIKE_RANGE = (1.2, 1.6)   # multiples of the feature envelope
SPIKE_FEATURES = 2
SHIFT_FEATURES = 4
DRIFT_DEPTH = 0.6          # multiples of the feature amplitude


def _inject(profile, values, sl, t, rng, amp, phase, offset, envelope, period):
    """Overwrite ``values[sl]`` in place with one anomaly profile."""
    L = len(t)
    d = values.shape[1]
    if profile == "spike":
        # a couple of features overshoot their envelope on the side they
        # are already on, so the joint pattern stays plausible
        k = min(d, SPIKE_FEATURES)
        for i in range(sl.start, sl.stop):
            feats = rng.choice(d, size=k, replace=False)
            sign = np.where(values[i, feats] >= offset[feats], 1.0, -1.0)
            values[i, feats] = offset[feats] + sign * envelope[feats] * rng.uniform(*SPIKE_RANGE, k)
    elif profile == "shift":
        # flip the fast oscillation of a few features
        feats = rng.choice(d, size=min(d, SHIFT_FEATURES), replace=False)
        fast = amp[feats] * np.sin(2 * np.pi * t[:, None] / period + phase[feats])
        values[sl, feats] -= 2 * fast
    else:
        ramp = np.linspace(0.6, 1.0, L)[:, None]
        values[sl] -= ramp * amp * DRIFT_DEPTH


def generate_synthetic(config: SynthConfig, seed: int | None = None) -> tuple[TimeSeries, TimeSeries]:
    """Build an anomaly-free training series and a labelled test series.

    Normal behaviour is a noisy mixture of two shared oscillations with
    per-feature loadings and offsets. Test anomalies come in three profiles:

    * ``spike``: short bursts of large excursions on a few features.
    * ``shift``: a subset of features runs in anti-phase, so each marginal
      stays in range while the joint pattern is broken.
    * ``drift``: all features slide together by a moderate offset, a shift
      that is unremarkable per feature but consistent across features.
    """
    if seed is None:
        seed = config.seed
    config.validate()
    rng, layout_rng = _streams(seed)
    d = config.d
    amp = rng.uniform(0.6, 1.4, d)
    phase = rng.uniform(0, 2 * np.pi, d)
    slow_amp = rng.uniform(0.2, 0.5, d)
    slow_phase = rng.uniform(0, 2 * np.pi, d)
    offset = rng.uniform(-1.0, 1.0, d)
    P = config.period
    P_slow = P * 6.7

    def normal(t0, T):
        t = np.arange(t0, t0 + T, dtype=float)[:, None]
        x = (offset + amp * np.sin(2 * np.pi * t / P + phase)
             + slow_amp * np.sin(2 * np.pi * t / P_slow + slow_phase))
        return x + config.noise * rng.standard_normal((T, d)), t

    train_vals, _ = normal(0, config.t_train)
    t0 = config.t_train
    test_vals, t_test = normal(t0, config.t_test)
    labels = np.zeros(config.t_test, dtype=np.int8)

    for start, L, profile in _segment_layout(layout_rng, config):
        sl = slice(start, start + L)
        labels[sl] = 1
        _inject(profile, test_vals, sl, t_test[sl, 0], rng, amp, phase, offset, amp + slow_amp, P)

    names = tuple(f"x{j}" for j in range(d))
    train = TimeSeries(train_vals, np.zeros(config.t_train, dtype=np.int8), names)
    test = TimeSeries(test_vals, labels, names, np.arange(t0, t0 + config.t_test))
    return train, test
