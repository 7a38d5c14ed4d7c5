"""INI run configuration shared by every CLI subcommand.

The whole file is parsed and validated up front; nothing touches the disk
until :func:`load_config` has returned. Relative paths are resolved against
the directory holding the config file.
"""

from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from . import detectors as det
from .dataio import DataError, SynthConfig, synth_config_from_mapping
from .dqnagent import AgentConfig, AgentError
from .mdpenv import MASKS, RewardConfig


class ConfigError(ValueError):
    pass


# section -> key -> help text; drives validation and the --help epilog
KEYS: dict[str, dict[str, str]] = {
    "dataset": {
        "source": "synth | csv",
        "train_path": "csv source: training CSV (anomaly-free)",
        "test_path": "csv source: labelled test CSV",
        "label_column": "name of the label column (default label)",
        "downsample": "block length for block-mean downsampling (default 5)",
        "t_train": "synth: training length",
        "t_test": "synth: test length",
        "d": "synth: number of features",
        "anomaly_rate": "synth: anomalous fraction of the test sequence",
        "segment_plan": "synth: profile:weight list, e.g. spike:1, shift:1, drift:1",
        "seed": "synth: dataset seed (independent of the run seeds)",
        "min_segment": "synth: shortest anomaly segment",
        "max_segment": "synth: longest anomaly segment",
        "period": "synth: period of the fast oscillation",
        "noise": "synth: gaussian noise level",
    },
    "pool": {
        "kinds": "comma-separated detector kinds: " + ", ".join(k.value for k in det.DetectorKind),
    },
    "detector.<kind>": {
        key: f"hyperparameter ({', '.join(k.value for k, hp in det.DEFAULT_HYPER.items() if key in hp)})"
        for key in sorted({k for hp in det.DEFAULT_HYPER.values() for k in hp})
    },
    "env": {
        "contamination": "fraction flagged by every detector threshold (default 0.12)",
        "reward_tp": "r1, paid for a true positive",
        "reward_tn": "r2, paid for a true negative",
        "reward_fp": "r3, charged for a false positive",
        "reward_fn": "r4, charged for a false negative",
        "mask": "observation mask: " + " | ".join(MASKS),
        "window": "window length of the windowed detectors (autoencoder)",
    },
    "agent": {f.name: f"AgentConfig.{f.name}" for f in fields(AgentConfig) if f.name != "seed"},
    "experiment": {
        "seeds": "run seeds: 0,1,2 or a range 0-9",
        "output_dir": "directory for every artifact",
        "jobs": "worker processes for seed-parallel runs (default 1)",
        "sweep_fp": "FP penalties of the sweep grid",
        "sweep_fn": "FN penalties of the sweep grid",
    },
}


@dataclass(frozen=True)
class DatasetBlock:
    source: str
    train_path: Path | None
    test_path: Path | None
    label_column: str | None
    downsample: int
    synth: SynthConfig | None


@dataclass(frozen=True)
class RunConfig:
    dataset: DatasetBlock
    kinds: tuple[det.DetectorKind, ...]
    hyper: dict
    contamination: float
    rewards: RewardConfig
    mask: str
    agent: AgentConfig
    seeds: tuple[int, ...]
    output_dir: Path
    jobs: int = 1
    sweep_fp: tuple[float, ...] = (0.2, 0.3, 0.4, 0.5, 0.6)
    sweep_fn: tuple[float, ...] = (1.0, 1.2, 1.5, 2.0)
    source_text: str = field(default="", compare=False, repr=False)

    @property
    def train_csv(self) -> Path:
        if self.dataset.source == "csv":
            return self.dataset.train_path
        return self.output_dir / "data" / "train.csv"

    @property
    def test_csv(self) -> Path:
        if self.dataset.source == "csv":
            return self.dataset.test_path
        return self.output_dir / "data" / "test.csv"

    @property
    def label_column(self) -> str:
        return self.dataset.label_column or "label"

    def to_dict(self) -> dict:
        """JSON-ready echo for manifests and policy metadata."""
        ds = self.dataset
        return {
            "dataset": {
                "source": ds.source,
                "train_path": str(self.train_csv),
                "test_path": str(self.test_csv),
                "label_column": self.label_column,
                "downsample": ds.downsample,
                "synth": asdict(ds.synth) if ds.synth else None,
            },
            "pool": {"kinds": [k.value for k in self.kinds],
                     "hyper": {k.value: det.resolve_hyper(k, self.hyper.get(k)) for k in self.kinds}},
            "env": {"contamination": self.contamination, "rewards": asdict(self.rewards), "mask": self.mask},
            "agent": asdict(self.agent),
            "experiment": {"seeds": list(self.seeds), "sweep_fp": list(self.sweep_fp),
                           "sweep_fn": list(self.sweep_fn)},
        }

    def with_seeds(self, seeds) -> "RunConfig":
        from dataclasses import replace
        return replace(self, seeds=tuple(int(s) for s in seeds))


# ---------------------------------------------------------------- parsing

def _floats(text: str, key: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise ConfigError(f"{key}: expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise ConfigError(f"{key}: empty list")
    return vals


def parse_seeds(text: str) -> tuple[int, ...]:
    """``"0-9"`` or ``"0, 3, 7"``; duplicates are rejected."""
    out: list[int] = []
    try:
        for part in text.split(","):
            part = part.strip()
            if not part:
                continue
            lo, sep, hi = part.partition("-")
            if sep and lo.strip():
                out.extend(range(int(lo), int(hi) + 1))
            else:
                out.append(int(part))
    except ValueError:
        raise ConfigError(f"seeds: cannot parse {text!r}") from None
    if not out:
        raise ConfigError("seeds: empty")
    if len(set(out)) != len(out):
        raise ConfigError("seeds: duplicates")
    if any(s < 0 for s in out):
        raise ConfigError("seeds must be non-negative")
    return tuple(out)


def _hyper_value(default, raw: str, where: str):
    raw = raw.strip()
    try:
        if default is None:
            return None if raw.lower() in ("none", "auto", "") else int(raw)
        if isinstance(default, int):
            return int(raw)
        return float(raw)
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r}") from None


def _agent_config(section, seed_default: int = 0) -> AgentConfig:
    kwargs = {}
    types = {f.name: f.default for f in fields(AgentConfig)}
    for key, raw in section.items():
        if key == "hidden":
            try:
                kwargs[key] = tuple(int(x) for x in raw.split(",") if x.strip())
            except ValueError:
                raise ConfigError(f"[agent] hidden: cannot parse {raw!r}") from None
            continue
        default = types[key]
        try:
            kwargs[key] = int(raw) if isinstance(default, int) else float(raw)
        except ValueError:
            raise ConfigError(f"[agent] {key}: cannot parse {raw!r}") from None
    cfg = AgentConfig(**kwargs, seed=seed_default)
    try:
        cfg.validate()
    except AgentError as exc:
        raise ConfigError(f"[agent] {exc}") from None
    return cfg


def _check_keys(parser: configparser.ConfigParser) -> None:
    for section in parser.sections():
        if section.startswith("detector."):
            kind = section.split(".", 1)[1]
            try:
                kind = det.DetectorKind(kind)
            except ValueError:
                raise ConfigError(f"[{section}]: unknown detector kind") from None
            known = det.DEFAULT_HYPER[kind]
        elif section in KEYS:
            known = KEYS[section]
        else:
            raise ConfigError(f"unknown section [{section}]")
        for key in parser[section]:
            if key not in known:
                raise ConfigError(f"[{section}] unknown key {key!r}")


def parse_config(text: str, base_dir: Path | None = None) -> RunConfig:
    base_dir = Path(base_dir or ".")
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    _check_keys(parser)
    get = lambda sec, key, default=None: (  # noqa: E731
        parser[sec][key].strip() if parser.has_section(sec) and key in parser[sec] else default)

    # dataset
    source = get("dataset", "source", "synth")
    try:
        block = int(get("dataset", "downsample", "5"))
    except ValueError:
        raise ConfigError("[dataset] downsample must be an integer") from None
    if block < 1:
        raise ConfigError("[dataset] downsample must be >= 1")
    if source == "synth":
        synth_keys = {k: v for k, v in (parser["dataset"].items() if parser.has_section("dataset") else [])
                      if k in ("t_train", "t_test", "d", "anomaly_rate", "segment_plan", "seed",
                               "min_segment", "max_segment", "period", "noise")}
        try:
            synth = synth_config_from_mapping(synth_keys)
        except (DataError, TypeError) as exc:
            raise ConfigError(f"[dataset] {exc}") from None
        dataset = DatasetBlock("synth", None, None, get("dataset", "label_column"), block, synth)
    elif source == "csv":
        paths = []
        for key in ("train_path", "test_path"):
            raw = get("dataset", key)
            if not raw:
                raise ConfigError(f"[dataset] {key} is required for source = csv")
            p = Path(raw)
            p = p if p.is_absolute() else base_dir / p
            if not p.is_file():
                raise ConfigError(f"[dataset] {key}: file not found: {p}")
            paths.append(p)
        dataset = DatasetBlock("csv", paths[0], paths[1], get("dataset", "label_column", "label"), block, None)
    else:
        raise ConfigError(f"[dataset] source must be synth or csv, got {source!r}")

    # pool
    try:
        kinds = det.check_pool([k.strip() for k in get("pool", "kinds", ",".join(k.value for k in det.DEFAULT_POOL)).split(",") if k.strip()])
    except (det.DetectorError, ValueError) as exc:
        raise ConfigError(f"[pool] {exc}") from None
    hyper: dict = {}
    for kind in det.DetectorKind:
        sec = f"detector.{kind.value}"
        if parser.has_section(sec):
            defaults = det.DEFAULT_HYPER[kind]
            hyper[kind] = {k: _hyper_value(defaults[k], v, f"[{sec}] {k}") for k, v in parser[sec].items()}

    # env
    try:
        contamination = float(get("env", "contamination", "0.12"))
        rewards = RewardConfig(
            tp=float(get("env", "reward_tp", "1.0")),
            tn=float(get("env", "reward_tn", "0.1")),
            fp=float(get("env", "reward_fp", "0.4")),
            fn=float(get("env", "reward_fn", "1.5")),
        )
    except ValueError as exc:
        raise ConfigError(f"[env] {exc}") from None
    if not 0.0 < contamination < 1.0:
        raise ConfigError("[env] contamination must lie in (0, 1)")
    bad = rewards.violations()
    if bad:
        raise ConfigError("[env] reward constraints violated: " + ", ".join(bad))
    mask = get("env", "mask", "full")
    if mask not in MASKS:
        raise ConfigError(f"[env] mask must be one of {', '.join(MASKS)}")
    window = get("env", "window")
    if window is not None:
        w = _hyper_value(12, window, "[env] window")
        ae = hyper.setdefault(det.DetectorKind.AUTOENCODER, {})
        if "window" in ae and ae["window"] != w:
            raise ConfigError("[env] window disagrees with [detector.autoencoder] window")
        ae["window"] = w
    for kind, hp in hyper.items():
        try:
            if det.window_length_for(kind, hp) < 1:
                raise ConfigError(f"[detector.{kind.value}] window must be >= 1")
        except det.DetectorError as exc:
            raise ConfigError(str(exc)) from None

    # agent and experiment
    agent = _agent_config(parser["agent"] if parser.has_section("agent") else {})
    seeds = parse_seeds(get("experiment", "seeds", "0"))
    out = Path(get("experiment", "output_dir", "runs/default"))
    out = out if out.is_absolute() else base_dir / out
    try:
        jobs = int(get("experiment", "jobs", "1"))
    except ValueError:
        raise ConfigError("[experiment] jobs must be an integer") from None
    if jobs < 1:
        raise ConfigError("[experiment] jobs must be >= 1")
    sweep_fp = _floats(get("experiment", "sweep_fp", "0.2,0.3,0.4,0.5,0.6"), "sweep_fp")
    sweep_fn = _floats(get("experiment", "sweep_fn", "1,1.2,1.5,2"), "sweep_fn")
    for fp in sweep_fp:
        for fn in sweep_fn:
            cell = RewardConfig(rewards.tp, rewards.tn, fp, fn)
            if cell.violations():
                raise ConfigError(f"[experiment] sweep cell fp={fp} fn={fn} violates "
                                  + ", ".join(cell.violations()))
    return RunConfig(dataset, kinds, hyper, contamination, rewards, mask, agent, seeds, out,
                     jobs, sweep_fp, sweep_fn, text)


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(path.read_text(encoding="utf-8"), path.parent)


def help_epilog() -> str:
    lines = ["configuration keys:"]
    for section, keys in KEYS.items():
        lines.append(f"  [{section}]")
        lines += [f"    {k:<26} {v}" for k, v in keys.items()]
    return "\n".join(lines)
