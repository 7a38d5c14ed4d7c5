"""Metrics, baselines, multi-seed runs, reward sweeps, ablations and reports.

Every run draws its pool from a ``pools(seed) -> PoolOutputs`` callable, so
one seed drives both detector fitting and the agent. Baselines are computed
on each seed's pool and aggregated exactly like the agent's rows.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from collections.abc import Callable, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy import stats

from . import dqnagent, mdpenv
from .pool import PoolOutputs

log = logging.getLogger(__name__)

AGENT_ROW = "rlmsad"
N_RANDOM_DRAWS = 10
ABLATION_ORDER = ("full", "drop_pc", "drop_dt")
CSV_HEADER = ("model", "precision_mean", "precision_std", "recall_mean", "recall_std",
              "f1_mean", "f1_std", "seeds")
GRID_FP_VALUES = (0.2, 0.3, 0.4, 0.5, 0.6)
GRID_FN_VALUES = (1.0, 1.2, 1.5, 2.0)


class HarnessError(RuntimeError):
    pass


# ---------------------------------------------------------------- metrics

@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


@dataclass(frozen=True)
class MetricsRecord:
    precision: float
    recall: float
    f1: float
    precision_undefined: bool = False
    recall_undefined: bool = False
    seed: int | None = None
    config: dict = field(default_factory=dict, compare=False)


def confusion(pred, truth) -> ConfusionCounts:
    pred = np.asarray(pred).astype(int).ravel()
    truth = np.asarray(truth).astype(int).ravel()
    if pred.shape != truth.shape:
        raise ValueError(f"length mismatch: {pred.size} predictions, {truth.size} labels")
    return ConfusionCounts(
        tp=int(np.sum((pred == 1) & (truth == 1))),
        tn=int(np.sum((pred == 0) & (truth == 0))),
        fp=int(np.sum((pred == 1) & (truth == 0))),
        fn=int(np.sum((pred == 0) & (truth == 1))),
    )


def metrics(counts: ConfusionCounts, seed: int | None = None, config: dict | None = None) -> MetricsRecord:
    """Zero denominators give 0 and set the matching ``*_undefined`` flag."""
    p_den = counts.tp + counts.fp
    r_den = counts.tp + counts.fn
    p = counts.tp / p_den if p_den else 0.0
    r = counts.tp / r_den if r_den else 0.0
    f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return MetricsRecord(p, r, f1, p_den == 0, r_den == 0, seed, dict(config or {}))


def exact_reward_total(counts: ConfusionCounts, rewards: mdpenv.RewardConfig) -> Fraction:
    """``r1*TP + r2*TN - r3*FP - r4*FN`` in rational arithmetic."""
    f = Fraction
    return (f(rewards.tp) * counts.tp + f(rewards.tn) * counts.tn
            - f(rewards.fp) * counts.fp - f(rewards.fn) * counts.fn)


# ---------------------------------------------------------------- baselines

def majority_vote(labels) -> np.ndarray:
    """1 iff at least ``ceil(M/2)`` detectors say 1."""
    labels = np.asarray(labels)
    need = math.ceil(labels.shape[1] / 2)
    return (labels.sum(axis=1) >= need).astype(np.int8)


def oracle_predictions(labels, truth) -> np.ndarray:
    """Pick a correct detector whenever one exists; otherwise every
    detector is wrong and the prediction is ``1 - truth``."""
    labels = np.asarray(labels)
    truth = np.asarray(truth).astype(np.int8)
    hit = (labels == truth[:, None]).any(axis=1)
    return np.where(hit, truth, 1 - truth).astype(np.int8)


def random_policy_predictions(labels, rng: np.random.Generator) -> np.ndarray:
    labels = np.asarray(labels)
    picks = rng.integers(labels.shape[1], size=labels.shape[0])
    return labels[np.arange(labels.shape[0]), picks].astype(np.int8)


def baseline_metrics(pool: PoolOutputs, seed: int = 0) -> dict[str, MetricsRecord]:
    """Single detectors, majority vote, the random policy (mean over
    :data:`N_RANDOM_DRAWS` draws) and the oracle selector."""
    labels, truth = pool.labels(), pool.truth
    out = {k.value: metrics(confusion(labels[:, m], truth), seed) for m, k in enumerate(pool.kinds)}
    out["majority"] = metrics(confusion(majority_vote(labels), truth), seed)
    rng = np.random.default_rng([int(seed), 0x5EED])
    draws = [metrics(confusion(random_policy_predictions(labels, rng), truth)) for _ in range(N_RANDOM_DRAWS)]
    out["random"] = MetricsRecord(
        float(np.mean([d.precision for d in draws])),
        float(np.mean([d.recall for d in draws])),
        float(np.mean([d.f1 for d in draws])),
        any(d.precision_undefined for d in draws),
        any(d.recall_undefined for d in draws),
        seed,
    )
    out["oracle"] = metrics(confusion(oracle_predictions(labels, truth), truth), seed)
    return out


# ---------------------------------------------------------------- reports

@dataclass(frozen=True)
class Aggregate:
    mean: float
    std: float  # sample std; nan with a single seed


def aggregate(values: Sequence[float]) -> Aggregate:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise HarnessError("nothing to aggregate")
    std = float(np.std(v, ddof=1)) if v.size > 1 else float("nan")
    return Aggregate(float(np.mean(v)), std)


@dataclass
class ReportRow:
    model: str
    precision: Aggregate
    recall: Aggregate
    f1: Aggregate
    seeds: int


def summarize(model: str, records: Sequence[MetricsRecord]) -> ReportRow:
    return ReportRow(model,
                     aggregate([r.precision for r in records]),
                     aggregate([r.recall for r in records]),
                     aggregate([r.f1 for r in records]),
                     len(records))


@dataclass
class RunReport:
    seeds: tuple[int, ...]
    records: list[MetricsRecord]
    baselines: dict[str, list[MetricsRecord]]
    config: dict = field(default_factory=dict)
    traces: dict[int, dqnagent.EvaluationTrace] = field(default_factory=dict, repr=False)

    def rows(self) -> list[ReportRow]:
        out = [summarize(AGENT_ROW, self.records)]
        out += [summarize(name, recs) for name, recs in self.baselines.items()]
        return out

    def row(self, model: str) -> ReportRow:
        for r in self.rows():
            if r.model == model:
                return r
        raise KeyError(model)


@dataclass(frozen=True)
class Trend:
    fixed: str          # "fn" or "fp"
    fixed_value: float
    varied_values: tuple[float, ...]
    precision_rho: float
    recall_rho: float

    @property
    def defined(self) -> bool:
        return not (math.isnan(self.precision_rho) or math.isnan(self.recall_rho))


@dataclass
class SweepReport:
    cells: list[tuple[mdpenv.RewardConfig, RunReport]]
    trends: list[Trend]


@dataclass
class AblationReport:
    variants: dict[str, RunReport]

    def rows(self) -> list[ReportRow]:
        return [replace(rep.row(AGENT_ROW), model=name) for name, rep in self.variants.items()]


# ---------------------------------------------------------------- runs

@dataclass(frozen=True)
class _SeedTask:
    pool: PoolOutputs
    seed: int
    rewards: mdpenv.RewardConfig
    agent: dqnagent.AgentConfig
    mask: str


def evaluate_seed(pool: PoolOutputs, policy: dqnagent.Policy, rewards: mdpenv.RewardConfig,
                  mask="full", seed: int = 0):
    """Greedy pass plus the exact accounting check on the returned trace."""
    trace = dqnagent.evaluate_policy(policy, mdpenv.DetectorSelectionEnv(pool, rewards, mask))
    counts = confusion(trace.predictions, trace.truth)
    if trace.exact_return() != exact_reward_total(counts, rewards):
        raise HarnessError(f"seed {seed}: episode return disagrees with the confusion counts")
    return trace, counts


def _run_seed(task: _SeedTask):
    env_factory = lambda: mdpenv.DetectorSelectionEnv(task.pool, task.rewards, task.mask)  # noqa: E731
    policy, _ = dqnagent.train(env_factory, replace(task.agent, seed=task.seed))
    return evaluate_seed(task.pool, policy, task.rewards, task.mask, task.seed)


def _map(fn, tasks, jobs: int):
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as ex:
        return list(ex.map(fn, tasks))


def run_experiment(pools: Callable[[int], PoolOutputs], rewards: mdpenv.RewardConfig,
                   agent: dqnagent.AgentConfig, mask="full", seeds: Sequence[int] = (0,),
                   jobs: int = 1) -> RunReport:
    """Train and greedily evaluate one agent per seed, plus the baselines."""
    seeds = tuple(int(s) for s in seeds)
    if not seeds:
        raise HarnessError("seeds must be non-empty")
    bad = rewards.violations()
    if bad:
        raise HarnessError("reward constraints violated: " + ", ".join(bad))
    mdpenv.resolve_mask(mask)
    agent.validate()
    config = {"rewards": asdict(rewards), "agent": asdict(agent), "mask": mask}
    pool_list = [pools(s) for s in seeds]
    tasks = [_SeedTask(p, s, rewards, agent, mask) for s, p in zip(seeds, pool_list)]
    log.info("running %d seeds (mask=%s, rewards=%s)", len(seeds), mask, asdict(rewards))
    try:
        results = _map(_run_seed, tasks, jobs)
    except (dqnagent.AgentError, mdpenv.EnvError, HarnessError) as exc:
        raise HarnessError(str(exc)) from exc
    return assemble_report(seeds, pool_list, results, config)


def assemble_report(seeds, pool_list, results, config: dict | None = None) -> RunReport:
    """Combine per-seed ``(trace, counts)`` results with per-seed baselines."""
    records, traces = [], {}
    baselines: dict[str, list[MetricsRecord]] = {}
    for s, pool, (trace, counts) in zip(seeds, pool_list, results):
        records.append(metrics(counts, s, config))
        traces[s] = trace
        for name, rec in baseline_metrics(pool, s).items():
            baselines.setdefault(name, []).append(rec)
    return RunReport(tuple(seeds), records, baselines, dict(config or {}), traces)


def full_grid() -> list[mdpenv.RewardConfig]:
    """The 20 (FP, FN) cells; TP and TN stay at 1 and 0.1."""
    return [mdpenv.RewardConfig(fp=fp, fn=fn) for fn in GRID_FN_VALUES for fp in GRID_FP_VALUES]


def cross_grid(fn_fixed: float, fp_values, fp_fixed: float, fn_values,
               base: mdpenv.RewardConfig | None = None) -> list[mdpenv.RewardConfig]:
    """One FP row at ``fn_fixed`` and one FN row at ``fp_fixed``, shared cell once."""
    base = base or mdpenv.RewardConfig()
    cells = [replace(base, fp=fp, fn=fn_fixed) for fp in fp_values]
    cells += [replace(base, fp=fp_fixed, fn=fn) for fn in fn_values]
    seen, out = set(), []
    for c in cells:
        if (c.fp, c.fn) not in seen:
            seen.add((c.fp, c.fn))
            out.append(c)
    return out


def spearman(x, y) -> float:
    """nan when fewer than two points or either side is constant."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if x.size < 2 or np.ptp(x) == 0 or np.ptp(y) == 0:
        return float("nan")
    return float(stats.spearmanr(x, y).statistic)


def trends(cells: Sequence[tuple[mdpenv.RewardConfig, RunReport]]) -> list[Trend]:
    out = []
    for fixed, varied in (("fn", "fp"), ("fp", "fn")):
        groups: dict[float, list] = {}
        for rc, rep in cells:
            groups.setdefault(getattr(rc, fixed), []).append((getattr(rc, varied), rep.row(AGENT_ROW)))
        for value in sorted(groups):
            pts = sorted(groups[value], key=lambda p: p[0])
            xs = [p[0] for p in pts]
            out.append(Trend(fixed, value, tuple(xs),
                             spearman(xs, [p[1].precision.mean for p in pts]),
                             spearman(xs, [p[1].recall.mean for p in pts])))
    return out


def sweep(cells: Sequence[mdpenv.RewardConfig], pools, agent: dqnagent.AgentConfig,
          mask="full", seeds: Sequence[int] = (0,), jobs: int = 1) -> SweepReport:
    """One run per reward cell; every cell is validated before training."""
    cells = list(cells)
    if not cells:
        raise HarnessError("empty sweep grid")
    for rc in cells:
        bad = rc.violations()
        if bad:
            raise HarnessError(f"grid cell fp={rc.fp} fn={rc.fn} violates " + ", ".join(bad))
    done = [(rc, run_experiment(pools, rc, agent, mask, seeds, jobs)) for rc in cells]
    return SweepReport(done, trends(done))


def ablate(pools, rewards: mdpenv.RewardConfig, agent: dqnagent.AgentConfig,
           seeds: Sequence[int] = (0,), jobs: int = 1) -> AblationReport:
    """Same seeds and budget for every mask; listed full, drop_pc, drop_dt."""
    return AblationReport({m: run_experiment(pools, rewards, agent, m, seeds, jobs) for m in ABLATION_ORDER})


class PoolCache:
    """Memoise ``pools(seed)`` so sweeps and ablations reuse fitted pools."""

    def __init__(self, build: Callable[[int], PoolOutputs]):
        self._build = build
        self._cache: dict[int, PoolOutputs] = {}

    def __call__(self, seed: int) -> PoolOutputs:
        seed = int(seed)
        if seed not in self._cache:
            self._cache[seed] = self._build(seed)
        return self._cache[seed]


# ---------------------------------------------------------------- emission

def _num(x: float) -> str:
    return "nan" if math.isnan(x) else f"{x:.6f}"


def _pct(a: Aggregate) -> str:
    std = "-" if math.isnan(a.std) else f"{100 * a.std:.2f}"
    return f"{100 * a.mean:.2f} ({std})"


def render_rows(rows: Sequence[ReportRow], fmt: str, label: str = "Model") -> str:
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in rows:
            w.writerow([r.model, _num(r.precision.mean), _num(r.precision.std), _num(r.recall.mean),
                        _num(r.recall.std), _num(r.f1.mean), _num(r.f1.std), r.seeds])
        return buf.getvalue()
    if fmt == "markdown":
        lines = [f"| {label} | Precision | Recall | F1 |", "|---|---|---|---|"]
        lines += [f"| {r.model} | {_pct(r.precision)} | {_pct(r.recall)} | {_pct(r.f1)} |" for r in rows]
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown report format {fmt!r}")


def render_trends(items: Sequence[Trend]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["fixed", "fixed_value", "varied_values", "precision_rho", "recall_rho", "defined"])
    for t in items:
        w.writerow([t.fixed, repr(t.fixed_value), " ".join(repr(v) for v in t.varied_values),
                    _num(t.precision_rho), _num(t.recall_rho), int(t.defined)])
    return buf.getvalue()


def emit_report(report, path, fmt: str = "csv") -> Path:
    """Write a run or ablation table; bytes depend only on the report."""
    if isinstance(report, AblationReport):
        text = render_rows(report.rows(), fmt, label="Variant")
    elif isinstance(report, RunReport):
        text = render_rows(report.rows(), fmt)
    else:
        raise TypeError(f"cannot emit {type(report).__name__}")
    path = Path(path)
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise HarnessError(f"cannot write report {path}: {exc}") from exc
    return path


def per_seed_csv(report: RunReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["seed", "model", "precision", "recall", "f1", "precision_undefined"])
    named = [(AGENT_ROW, report.records)] + list(report.baselines.items())
    for i, s in enumerate(report.seeds):
        for name, recs in named:
            r = recs[i]
            w.writerow([s, name, _num(r.precision), _num(r.recall), _num(r.f1), int(r.precision_undefined)])
    return buf.getvalue()
