"""Command-line pipeline: synth -> pretrain -> score -> train -> eval, plus
sweep and ablate over the stored scores.

Every stage reads its inputs from and writes its outputs to the configured
output directory::

    data/{train,test}.csv           synth
    models/scaler.json              pretrain
    models/seed_<s>/<kind>.json     pretrain
    scores/seed_<s>.csv             score
    policies/seed_<s>.json          train
    reports/eval/                   eval
    reports/sweep/fp<..>_fn<..>/    sweep
    reports/ablate/                 ablate
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import detectors as det
from . import dqnagent, evalharness, mdpenv
from .config import ConfigError, RunConfig
from .dataio import (
    DataError,
    FeatureScaler,
    TimeSeries,
    apply_scaler,
    anomaly_segments,
    downsample,
    fit_scaler,
    generate_synthetic,
    load_csv,
    write_csv,
)
from .pool import PoolOutputs, build_pool, fit_pool, read_scores, score_pool, write_scores

log = logging.getLogger("rlmsad")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_RUNTIME = 0, 2, 3, 4
SUBCOMMANDS = ("synth", "pretrain", "score", "train", "eval", "sweep", "ablate")


# ---------------------------------------------------------------- file helpers

def git_blob_hash(data: bytes) -> str:
    """Content hash in git's blob format."""
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def write_manifest(directory: Path, cfg: RunConfig, subcommand: str, inputs, extra=None) -> None:
    """Configs, seeds and hashes of every input file; no timings."""
    doc = {
        "subcommand": subcommand,
        "config": cfg.to_dict(),
        "seeds": list(cfg.seeds),
        "seed_scope": "each seed drives detector fitting and the agent",
        "inputs": {str(p.relative_to(cfg.output_dir)) if p.is_relative_to(cfg.output_dir) else str(p):
                   git_blob_hash(p.read_bytes()) for p in sorted(inputs)},
    }
    if extra:
        doc.update(extra)
    _write_text(directory / "manifest.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")


def scaler_to_json(s: FeatureScaler) -> str:
    return json.dumps({"format": "rlmsad-scaler", "format_version": 1,
                       "minimum": [float(v) for v in s.minimum],
                       "maximum": [float(v) for v in s.maximum]}, sort_keys=True)


def scaler_from_json(text: str) -> FeatureScaler:
    try:
        doc = json.loads(text)
        if doc.get("format") != "rlmsad-scaler" or doc.get("format_version") != 1:
            raise DataError("not a scaler file")
        return FeatureScaler(np.array(doc["minimum"]), np.array(doc["maximum"]))
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DataError(f"corrupt scaler file: {exc}") from None


def _need(path: Path, what: str) -> Path:
    if not path.is_file():
        raise DataError(f"{what} not found: {path}")
    return path


def _models_dir(cfg, seed) -> Path:
    return cfg.output_dir / "models" / f"seed_{seed}"


def _scores_path(cfg, seed) -> Path:
    return cfg.output_dir / "scores" / f"seed_{seed}.csv"


def _policy_path(cfg, seed) -> Path:
    return cfg.output_dir / "policies" / f"seed_{seed}.json"


def _read_series(cfg: RunConfig, which: str) -> TimeSeries:
    path = cfg.train_csv if which == "train" else cfg.test_csv
    _need(path, f"{which} CSV")
    label = cfg.label_column
    header = path.open(encoding="utf-8").readline().strip().split(",")
    series = load_csv(path, label if label in header else None)
    if which == "test" and series.labels is None:
        raise DataError(f"{path}: test CSV needs the label column {label!r}")
    return series


def _load_series(cfg: RunConfig, which: str) -> TimeSeries:
    return downsample(_read_series(cfg, which), cfg.dataset.downsample)


def _load_pools(cfg: RunConfig) -> dict[int, PoolOutputs]:
    pools = {}
    for s in cfg.seeds:
        pool = read_scores(_need(_scores_path(cfg, s), "score file (run `score` first)"))
        if tuple(pool.kinds) != tuple(cfg.kinds):
            raise DataError(f"score file for seed {s} holds pool {[k.value for k in pool.kinds]}, "
                            f"config asks for {[k.value for k in cfg.kinds]}")
        pools[s] = pool
    return pools


def in_memory_pools(cfg: RunConfig) -> evalharness.PoolCache:
    """Seed -> pool without touching the disk; same pipeline as
    ``synth``/``pretrain``/``score``."""
    if cfg.dataset.source == "synth":
        train, test = generate_synthetic(cfg.dataset.synth)
    else:
        train, test = _read_series(cfg, "train"), _read_series(cfg, "test")
    return evalharness.PoolCache(lambda s: build_pool(
        train, test, cfg.kinds, cfg.hyper, s, cfg.contamination, cfg.dataset.downsample))


# ---------------------------------------------------------------- subcommands

def cmd_synth(cfg: RunConfig, args) -> None:
    if cfg.dataset.source != "synth":
        raise ConfigError("synth needs [dataset] source = synth")
    synth = cfg.dataset.synth
    train, test = generate_synthetic(synth)
    cfg.train_csv.parent.mkdir(parents=True, exist_ok=True)
    write_csv(train, cfg.train_csv, cfg.label_column)
    write_csv(test, cfg.test_csv, cfg.label_column)
    n_anom = int(test.labels.sum())
    segs = anomaly_segments(synth)
    by_profile = {}
    for _, length, prof in segs:
        by_profile[prof] = by_profile.get(prof, 0) + length
    detail = ", ".join(f"{k} {v}" for k, v in sorted(by_profile.items()))
    print(f"train {train.n_timesteps} rows, test {test.n_timesteps} rows, "
          f"{n_anom} anomalous ({100 * n_anom / test.n_timesteps:.2f}%) in {len(segs)} segments: {detail}")


def cmd_pretrain(cfg: RunConfig, args) -> None:
    train = _load_series(cfg, "train")
    scaler = fit_scaler(train)
    train = apply_scaler(scaler, train)
    _write_text(cfg.output_dir / "models" / "scaler.json", scaler_to_json(scaler) + "\n")
    for s in cfg.seeds:
        timings: dict[str, float] = {}
        try:
            fitted = fit_pool(train, cfg.kinds, cfg.hyper, s, timings)
        except det.DetectorError as exc:
            raise RuntimeError(f"seed {s}: {exc}") from exc
        out = _models_dir(cfg, s)
        for f in fitted:
            _write_text(out / f"{f.kind.value}.json", det.serialize(f) + "\n")
        print(f"seed {s}: " + ", ".join(f"{k} {v:.2f}s" for k, v in timings.items()))


def cmd_score(cfg: RunConfig, args) -> None:
    scaler = scaler_from_json(_need(cfg.output_dir / "models" / "scaler.json",
                                    "scaler (run `pretrain` first)").read_text(encoding="utf-8"))
    test = apply_scaler(scaler, _load_series(cfg, "test"))
    loaded = {}
    for s in cfg.seeds:
        fitted = []
        for kind in cfg.kinds:
            path = _need(_models_dir(cfg, s) / f"{kind.value}.json", f"{kind.value} artifact for seed {s}")
            f = det.deserialize(path.read_text(encoding="utf-8"))
            if f.kind is not kind:
                raise DataError(f"{path}: artifact holds {f.kind.value}, expected {kind.value}")
            if f.hyper != det.resolve_hyper(kind, cfg.hyper.get(kind)):
                raise DataError(f"{path}: artifact hyperparameters differ from the config; rerun pretrain")
            fitted.append(f)
        loaded[s] = fitted
    for s, fitted in loaded.items():
        pool = score_pool(fitted, test, cfg.contamination)
        path = _scores_path(cfg, s)
        path.parent.mkdir(parents=True, exist_ok=True)
        write_scores(pool, path)
        print(f"seed {s}: {pool.length} timesteps -> {path}")


def _policy_metadata(cfg: RunConfig, seed: int, mask: str, rewards) -> dict:
    return {"seed": seed, "mask": mask, "kinds": [k.value for k in cfg.kinds],
            "rewards": {"tp": rewards.tp, "tn": rewards.tn, "fp": rewards.fp, "fn": rewards.fn}}


def cmd_train(cfg: RunConfig, args) -> None:
    pools = _load_pools(cfg)
    for s, pool in pools.items():
        agent = replace(cfg.agent, seed=s)
        policy, stats = dqnagent.train(
            lambda: mdpenv.DetectorSelectionEnv(pool, cfg.rewards, cfg.mask), agent,
            _policy_metadata(cfg, s, cfg.mask, cfg.rewards))
        _write_text(_policy_path(cfg, s), dqnagent.policy_to_json(policy) + "\n")
        last = stats.episode_returns[-1] if stats.episode_returns else float("nan")
        print(f"seed {s}: {stats.total_steps} steps, {len(stats.episode_returns)} episodes, "
              f"last return {last:.2f}")


def _emit_run(report: evalharness.RunReport, directory: Path, fmt: str) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    ext = "csv" if fmt == "csv" else "md"
    evalharness.emit_report(report, directory / f"report.{ext}", fmt)
    _write_text(directory / "per_seed.csv", evalharness.per_seed_csv(report))


def cmd_eval(cfg: RunConfig, args) -> None:
    pools = _load_pools(cfg)
    results, inputs = [], []
    for s, pool in pools.items():
        path = _need(_policy_path(cfg, s), f"policy for seed {s} (run `train` first)")
        policy = dqnagent.policy_from_json(path.read_text(encoding="utf-8"))
        meta = policy.metadata
        if meta.get("kinds") != [k.value for k in cfg.kinds] or meta.get("mask") != cfg.mask:
            raise DataError(f"{path}: policy was trained for a different pool or mask")
        results.append(evalharness.evaluate_seed(pool, policy, cfg.rewards, cfg.mask, s))
        inputs += [path, _scores_path(cfg, s)]
    report = evalharness.assemble_report(list(pools), list(pools.values()), results,
                                         {"mask": cfg.mask})
    out = cfg.output_dir / "reports" / "eval"
    _emit_run(report, out, args.format)
    (out / "traces").mkdir(exist_ok=True)
    for s, trace in report.traces.items():
        mdpenv.write_trace(out / "traces" / f"seed_{s}.csv", trace.actions, trace.rewards,
                           trace.truth, trace.predictions)
    write_manifest(out, cfg, "eval", inputs)
    print(evalharness.render_rows(report.rows(), "markdown"), end="")


def _cell_name(rc) -> str:
    return f"fp{rc.fp:g}_fn{rc.fn:g}"


def cmd_sweep(cfg: RunConfig, args) -> None:
    pools = _load_pools(cfg)
    cells = [replace(cfg.rewards, fp=fp, fn=fn) for fn in cfg.sweep_fn for fp in cfg.sweep_fp]
    rep = evalharness.sweep(cells, pools.__getitem__, cfg.agent, cfg.mask, cfg.seeds, args.jobs or cfg.jobs)
    out = cfg.output_dir / "reports" / "sweep"
    for rc, run in rep.cells:
        _emit_run(run, out / _cell_name(rc), args.format)
    _write_text(out / "trends.csv", evalharness.render_trends(rep.trends))
    write_manifest(out, cfg, "sweep", [_scores_path(cfg, s) for s in cfg.seeds],
                   {"cells": [_cell_name(rc) for rc, _ in rep.cells]})
    print(f"{len(rep.cells)} cells -> {out}")
    print(evalharness.render_trends(rep.trends), end="")


def cmd_ablate(cfg: RunConfig, args) -> None:
    pools = _load_pools(cfg)
    rep = evalharness.ablate(pools.__getitem__, cfg.rewards, cfg.agent, cfg.seeds, args.jobs or cfg.jobs)
    out = cfg.output_dir / "reports" / "ablate"
    out.mkdir(parents=True, exist_ok=True)
    ext = "csv" if args.format == "csv" else "md"
    evalharness.emit_report(rep, out / f"ablation.{ext}", args.format)
    for name, run in rep.variants.items():
        _emit_run(run, out / name, args.format)
    write_manifest(out, cfg, "ablate", [_scores_path(cfg, s) for s in cfg.seeds],
                   {"variants": list(rep.variants)})
    print(evalharness.render_rows(rep.rows(), "markdown", label="Variant"), end="")


COMMANDS = {
    "synth": cmd_synth, "pretrain": cmd_pretrain, "score": cmd_score, "train": cmd_train,
    "eval": cmd_eval, "sweep": cmd_sweep, "ablate": cmd_ablate,
}


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rlmsad",
        description="Reinforcement-learning selection among time-series anomaly detectors.",
        epilog=cfgmod.help_epilog() + "\n\nenvironment: RLMSAD_LOG = error | info | debug\n"
               "exit codes: 0 ok, 2 config error, 3 data error, 4 runtime failure",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", required=True, help="INI run configuration")
    parser.add_argument("--output", help="override [experiment] output_dir")
    parser.add_argument("--jobs", type=int, help="worker processes (default from config)")
    parser.add_argument("--seed-override", type=int, help="run this single seed instead of [experiment] seeds")
    parser.add_argument("--format", choices=("csv", "markdown"), default="csv", help="report format")
    return parser


def _configure_logging() -> None:
    level = os.environ.get("RLMSAD_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    if level not in levels:
        raise ConfigError(f"RLMSAD_LOG must be one of {', '.join(levels)}, got {level!r}")
    logging.basicConfig(level=levels[level], stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def _error_line(subcommand, kind: str, code: int, message: str) -> None:
    print(json.dumps({"error": kind, "exit_code": code, "subcommand": subcommand, "message": message},
                     sort_keys=True), file=sys.stderr)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _configure_logging()
        cfg = cfgmod.load_config(args.config)
        if args.output:
            cfg = replace(cfg, output_dir=Path(args.output).resolve())
        if args.seed_override is not None:
            if args.seed_override < 0:
                raise ConfigError("--seed-override must be non-negative")
            cfg = cfg.with_seeds([args.seed_override])
        if args.jobs is not None and args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        t0 = time.perf_counter()
        COMMANDS[args.subcommand](cfg, args)
        log.info("%s finished in %.1fs", args.subcommand, time.perf_counter() - t0)
        return EXIT_OK
    except ConfigError as exc:
        _error_line(args.subcommand, "config", EXIT_CONFIG, str(exc))
        return EXIT_CONFIG
    except DataError as exc:
        _error_line(args.subcommand, "data", EXIT_DATA, str(exc))
        return EXIT_DATA
    except (det.DetectorError, dqnagent.AgentError, mdpenv.EnvError, evalharness.HarnessError,
            RuntimeError, OSError) as exc:
        _error_line(args.subcommand, "runtime", EXIT_RUNTIME, str(exc))
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
