"""Acceptance criteria 1-9. Each test records one PASS/FAIL line (shown in
the terminal summary) before asserting. Tolerances are pinned here."""

import math
import shutil
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from conftest import VERDICTS
from helpers import pool_from_labels, pool_from_scores
from oracles import (confusion_loop, copod_brute, dt_fraction, ecod_brute, max_rel_error,
                     mlp_loss, numeric_grads, pc_fraction, prf_fraction, reward_loop)
from rlmsad import cli, confidence, dqnagent, evalharness as eh, mdpenv
from rlmsad import detectors as det
from rlmsad import neuralcore as nc
from rlmsad.config import load_config
from rlmsad.detectors.ecdf import copod_scores, ecod_scores, fit_tables
from rlmsad.detectors.iforest import fit_iforest, iforest_scores

ROOT = Path(__file__).resolve().parents[1]
BENCHMARK = ROOT / "configs" / "benchmark.ini"
DEFAULT_REWARDS = mdpenv.RewardConfig(1, 0.1, 0.4, 1.5)

FLOAT_TOL = 1e-12
FD_REL_TOL = 1e-4
ECDF_TOL = 1e-9
PRECISION_MARGIN = 0.02
ABLATION_MARGIN = 0.01


def verdict(n, ok, detail):
    VERDICTS[n] = f"C{n} {'PASS' if ok else 'FAIL'}  {detail}"
    print(VERDICTS[n])
    assert ok, VERDICTS[n]


# ---------------------------------------------------------------- 1

def test_c1_formula_oracles():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    bad = 0
    grid = [DEFAULT_REWARDS, mdpenv.RewardConfig(1, 0.5, 0.5, 1), mdpenv.RewardConfig(2, 0.3, 0.7, 1.1)]
    for i in range(200):
        score, thr = rng.normal(scale=5, size=2)
        lo, hi = sorted(rng.normal(scale=5, size=2))
        got = confidence.distance_to_threshold(score, thr, hi, lo)
        bad += abs(got - float(dt_fraction(score, thr, hi, lo))) > FLOAT_TOL * max(1, abs(got))

        labels = rng.integers(0, 2, int(rng.integers(2, 9))).tolist()
        mine = int(rng.integers(0, 2))
        bad += Fraction(confidence.prediction_consensus(labels, mine)).limit_denominator(64) \
            != pc_fraction(labels, mine)

        n = int(rng.integers(1, 80))
        pred, truth = rng.integers(0, 2, n), rng.integers(0, 2, n)
        c = eh.confusion(pred, truth)
        bad += (c.tp, c.tn, c.fp, c.fn) != confusion_loop(pred, truth)
        m = eh.metrics(c)
        p, r, f = prf_fraction(c.tp, c.fp, c.fn)
        bad += max(abs(m.precision - float(p)), abs(m.recall - float(r)), abs(m.f1 - float(f))) > FLOAT_TOL

        rc = grid[i % 3]
        bad += eh.exact_reward_total(c, rc) != reward_loop(pred, truth, rc.tp, rc.tn, rc.fp, rc.fn)
        # the environment pays the same per step
        env = mdpenv.DetectorSelectionEnv(pool_from_labels(np.column_stack([pred, 1 - pred]), truth), rc)
        env.reset()
        total = Fraction(0)
        for t in range(n):
            total += Fraction(env.step(0)[1])
        bad += total != reward_loop(pred, truth, rc.tp, rc.tn, rc.fp, rc.fn)
    elapsed = time.perf_counter() - t0
    verdict(1, bad == 0 and elapsed < 5, f"formula oracles: {bad} mismatches in 200 cases x 5 formulas, {elapsed:.2f}s (< 5s)")


# ---------------------------------------------------------------- 2

def test_c2_gradients():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    worst = 0.0
    for k in range(10):
        sizes = tuple(int(v) for v in rng.integers(1, 9, size=int(rng.integers(2, 5))))
        net = nc.init_network(sizes, k)
        for b in net.biases:
            b[...] = rng.normal(size=b.shape)  # keep pre-activations off the relu kink
        X, Y = rng.normal(size=(5, sizes[0])), rng.normal(size=(5, sizes[-1]))
        _, tape = nc.backward(net, X, "mse", Y)
        num = numeric_grads(lambda: mlp_loss(net.weights, net.biases, X, Y), net.params())
        worst = max(worst, max_rel_error(tape.params(), num, floor=1e-6))
    elapsed = time.perf_counter() - t0
    verdict(2, worst < FD_REL_TOL and elapsed < 30,
            f"gradients: worst relative error {worst:.2e} (< {FD_REL_TOL:g}) on 10 architectures, {elapsed:.1f}s (< 30s)")


# ---------------------------------------------------------------- 3

def test_c3_detector_oracles():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    ecdf_err = 0.0
    for trial in range(10):
        n, d = int(rng.integers(8, 201)), int(rng.integers(1, 5))
        train = rng.lognormal(size=(n, d)) * rng.choice([-1, 1], d)
        test = np.vstack([train[:4], rng.normal(scale=3, size=(4, d))])
        tables = fit_tables(train)
        for x, e, c in zip(test, ecod_scores(tables, test), copod_scores(tables, test)):
            ecdf_err = max(ecdf_err, abs(e - ecod_brute(train, x)), abs(c - copod_brute(train, x)))

    hits = 0
    for seed in range(20):
        r = np.random.default_rng(seed)
        X = r.normal(size=(64, 2))
        model = fit_iforest(X, r, n_trees=100, max_samples=64)
        hits += iforest_scores(model, [[15.0, 15.0]])[0] > np.median(iforest_scores(model, X))

    counts_ok = True
    for N in (50, 123, 1000, 4989):
        flagged = int(det.threshold_scores(rng.permutation(N).astype(float) + rng.random(N) * 0.1, 0.12).labels.sum())
        counts_ok &= abs(flagged - math.floor(0.12 * N)) <= 1
    elapsed = time.perf_counter() - t0
    ok = ecdf_err <= ECDF_TOL and hits == 20 and counts_ok and elapsed < 60
    verdict(3, ok, f"detectors: ECDF max error {ecdf_err:.1e} (<= {ECDF_TOL:g}), iForest outlier {hits}/20, "
                   f"threshold counts {'ok' if counts_ok else 'off'}, {elapsed:.1f}s (< 60s)")


# ---------------------------------------------------------------- 4

def test_c4_return_accounting():
    agent = dqnagent.AgentConfig(hidden=(16,), learning_starts=50, total_steps=600, target_update_interval=100)
    checked = bad = 0
    for seed in range(5):
        rng = np.random.default_rng(seed)
        truth = (rng.random(60) < 0.2).astype(int)
        pool = pool_from_scores(rng.normal(size=(60, 3)) + truth[:, None] * rng.random(3), truth)
        for rc in (DEFAULT_REWARDS, mdpenv.RewardConfig(1, 0.5, 0.5, 1), mdpenv.RewardConfig(2, 0.3, 0.7, 1.1)):
            policy, _ = dqnagent.train(lambda: mdpenv.DetectorSelectionEnv(pool, rc), dqnagent.AgentConfig(
                **{**agent.__dict__, "seed": seed}))
            trace, counts = eh.evaluate_seed(pool, policy, rc, "full", seed)
            expected = (Fraction(rc.tp) * counts.tp + Fraction(rc.tn) * counts.tn
                        - Fraction(rc.fp) * counts.fp - Fraction(rc.fn) * counts.fn)
            bad += trace.exact_return() != expected
            bad += expected != reward_loop(trace.predictions, trace.truth, rc.tp, rc.tn, rc.fp, rc.fn)
            checked += 1
    verdict(4, bad == 0, f"accounting: {checked} evaluated policies, {bad} return mismatches (exact)")


# ---------------------------------------------------------------- 5

def test_c5_bandit():
    t0 = time.perf_counter()
    # one step, truth normal; only detector 2 stays silent
    pool = pool_from_labels([[1, 1, 0, 1]], [0])
    env = lambda: mdpenv.DetectorSelectionEnv(pool, DEFAULT_REWARDS)  # noqa: E731
    best = max(range(4), key=lambda a: DEFAULT_REWARDS.reward(int(pool.labels()[0, a]), 0))
    wins = 0
    for seed in range(10):
        policy, _ = dqnagent.train(env, dqnagent.AgentConfig(total_steps=5000, seed=seed))
        wins += policy.act(env().reset()) == best
    elapsed = time.perf_counter() - t0
    verdict(5, wins >= 9 and elapsed < 120, f"bandit: optimal arm {best} in {wins}/10 seeds (>= 9), {elapsed:.1f}s (< 120s)")


# ---------------------------------------------------------------- 6-8: benchmark

@pytest.fixture(scope="module")
def bench():
    cfg = load_config(BENCHMARK)
    return {"cfg": cfg, "pools": cli.in_memory_pools(cfg), "runs": {}}


def best_and_worst(report):
    kinds = [k.value for k in report_kinds(report)]
    rows = {r.model: r for r in report.rows()}
    return (max(kinds, key=lambda k: rows[k].precision.mean),
            min(kinds, key=lambda k: rows[k].f1.mean), rows)


def report_kinds(report):
    return [det.DetectorKind(k) for k in report.baselines if k in {d.value for d in det.DetectorKind}]


@pytest.mark.slow
def test_c6_selection_gain(bench):
    cfg = bench["cfg"]
    t0 = time.perf_counter()
    rep = eh.run_experiment(bench["pools"], cfg.rewards, cfg.agent, cfg.mask, cfg.seeds)
    elapsed = time.perf_counter() - t0
    bench["runs"]["full"] = rep
    best, worst, rows = best_and_worst(rep)
    rl, oracle = rows[eh.AGENT_ROW], rows["oracle"]
    p_ok = rl.precision.mean >= rows[best].precision.mean - PRECISION_MARGIN
    f_ok = oracle.f1.mean >= rl.f1.mean >= rows[worst].f1.mean
    print(eh.render_rows(rep.rows(), "markdown"))
    verdict(6, p_ok and f_ok and elapsed < 900,
            f"selection: RL precision {rl.precision.mean:.4f} vs best single {best} {rows[best].precision.mean:.4f} "
            f"- {PRECISION_MARGIN}; F1 oracle {oracle.f1.mean:.4f} >= RL {rl.f1.mean:.4f} >= worst {worst} "
            f"{rows[worst].f1.mean:.4f}; {len(cfg.seeds)} seeds, {elapsed / 60:.1f} min (< 15)")


@pytest.mark.slow
def test_c7_reward_trends(bench):
    cfg = bench["cfg"]
    t0 = time.perf_counter()
    cells = eh.cross_grid(1.0, cfg.sweep_fp, 0.4, cfg.sweep_fn, cfg.rewards)
    rep = eh.sweep(cells, bench["pools"], cfg.agent, cfg.mask, cfg.seeds)
    elapsed = time.perf_counter() - t0
    fp_row = next(t for t in rep.trends if t.fixed == "fn" and t.fixed_value == 1.0)
    fn_row = next(t for t in rep.trends if t.fixed == "fp" and t.fixed_value == 0.4)
    ok = (fp_row.defined and fn_row.defined
          and fp_row.precision_rho >= 0 and fp_row.recall_rho <= 0
          and fn_row.precision_rho <= 0 and fn_row.recall_rho >= 0 and elapsed < 2700)
    for rc, run in rep.cells:
        r = run.row(eh.AGENT_ROW)
        print(f"fp={rc.fp:g} fn={rc.fn:g} P={r.precision.mean:.4f} R={r.recall.mean:.4f}")
    verdict(7, ok, f"trends: FP sweep rho(P)={fp_row.precision_rho:+.2f} (>= 0) rho(R)={fp_row.recall_rho:+.2f} (<= 0); "
                   f"FN sweep rho(P)={fn_row.precision_rho:+.2f} (<= 0) rho(R)={fn_row.recall_rho:+.2f} (>= 0); "
                   f"{elapsed / 60:.1f} min (< 45)")


@pytest.mark.slow
def test_c8_ablation(bench):
    cfg = bench["cfg"]
    full = bench["runs"].get("full") or eh.run_experiment(bench["pools"], cfg.rewards, cfg.agent, "full", cfg.seeds)
    f1 = {"full": full.row(eh.AGENT_ROW).f1.mean}
    for mask in ("drop_pc", "drop_dt"):
        f1[mask] = eh.run_experiment(bench["pools"], cfg.rewards, cfg.agent, mask, cfg.seeds).row(eh.AGENT_ROW).f1.mean
    ok = all(f1["full"] >= f1[m] - ABLATION_MARGIN for m in ("drop_pc", "drop_dt"))
    verdict(8, ok, "ablation: F1 full {full:.4f}, drop_pc {drop_pc:.4f}, drop_dt {drop_dt:.4f} "
                   "(full >= each - 0.01)".format(**f1))


# ---------------------------------------------------------------- 9

TINY = """
[dataset]
t_train = 300
t_test = 300
d = 3
min_segment = 5
max_segment = 10
downsample = 2
[detector.iforest]
n_trees = 10
[detector.ocsvm_sgd]
epochs = 2
[detector.autoencoder]
window = 3
epochs = 2
[agent]
hidden = 8
learning_starts = 40
total_steps = 300
target_update_interval = 100
checkpoint_interval = 100
[experiment]
seeds = 0-1
output_dir = out
sweep_fp = 0.3, 0.5
sweep_fn = 1, 2
"""


def test_c9_determinism(tmp_path):
    config = tmp_path / "tiny.ini"
    config.write_text(TINY)
    snapshots = []
    for _ in range(2):
        shutil.rmtree(tmp_path / "out", ignore_errors=True)
        for sub in cli.SUBCOMMANDS:
            assert cli.main([sub, "--config", str(config)]) == 0, sub
        out = tmp_path / "out"
        snapshots.append({str(p.relative_to(out)): p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()})
    same = snapshots[0] == snapshots[1]
    verdict(9, same, f"determinism: {len(snapshots[0])} files over {len(cli.SUBCOMMANDS)} subcommands, "
                     f"{'byte-identical' if same else 'differ'} across reruns")
