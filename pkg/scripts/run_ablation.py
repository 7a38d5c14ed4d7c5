"""State-feature ablation: full state against dropping either confidence
score, on shared seeds.

    python scripts/run_ablation.py configs/benchmark.ini
"""

import argparse
import time

from rlmsad import cli, evalharness as eh
from rlmsad.config import load_config, parse_seeds


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config", nargs="?", default="configs/benchmark.ini")
    ap.add_argument("--seeds")
    args = ap.parse_args()

    cfg = load_config(args.config)
    if args.seeds:
        cfg = cfg.with_seeds(parse_seeds(args.seeds))
    t0 = time.perf_counter()
    rep = eh.ablate(cli.in_memory_pools(cfg), cfg.rewards, cfg.agent, cfg.seeds, cfg.jobs)
    print(eh.render_rows(rep.rows(), "markdown", label="Variant"), end="")
    print(f"\n{len(cfg.seeds)} seeds x 3 variants in {time.perf_counter() - t0:.0f}s")


if __name__ == "__main__":
    main()
