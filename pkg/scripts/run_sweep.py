"""Reward-penalty sweep: the FP row at a fixed FN and the FN row at a fixed
FP (``--full`` runs the whole grid instead).

    python scripts/run_sweep.py configs/benchmark.ini --seeds 0-4
"""

import argparse
import time
from dataclasses import replace

from rlmsad import cli, evalharness as eh
from rlmsad.config import load_config, parse_seeds


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config", nargs="?", default="configs/benchmark.ini")
    ap.add_argument("--seeds")
    ap.add_argument("--fn-fixed", type=float, default=1.0)
    ap.add_argument("--fp-fixed", type=float, default=0.4)
    ap.add_argument("--full", action="store_true", help="every (fp, fn) pair of the config grid")
    args = ap.parse_args()

    cfg = load_config(args.config)
    if args.seeds:
        cfg = cfg.with_seeds(parse_seeds(args.seeds))
    if args.full:
        cells = [replace(cfg.rewards, fp=fp, fn=fn)
                 for fn in cfg.sweep_fn for fp in cfg.sweep_fp]
    else:
        cells = eh.cross_grid(args.fn_fixed, cfg.sweep_fp, args.fp_fixed, cfg.sweep_fn, cfg.rewards)
    t0 = time.perf_counter()
    rep = eh.sweep(cells, cli.in_memory_pools(cfg), cfg.agent, cfg.mask, cfg.seeds, cfg.jobs)
    print("fp,fn,precision,recall,f1")
    for rc, run in rep.cells:
        r = run.row(eh.AGENT_ROW)
        print(f"{rc.fp:g},{rc.fn:g},{r.precision.mean:.4f},{r.recall.mean:.4f},{r.f1.mean:.4f}")
    print()
    print(eh.render_trends(rep.trends), end="")
    print(f"\n{len(cells)} cells x {len(cfg.seeds)} seeds in {time.perf_counter() - t0:.0f}s")


if __name__ == "__main__":
    main()
