"""Train and evaluate the selector on every seed of a config, in memory.

    python scripts/run_benchmark.py configs/benchmark.ini
"""

import argparse
import time

from rlmsad import cli, evalharness as eh
from rlmsad.config import load_config, parse_seeds


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config", nargs="?", default="configs/benchmark.ini")
    ap.add_argument("--seeds", help="override the config seeds, e.g. 0-2")
    ap.add_argument("--format", choices=("csv", "markdown"), default="markdown")
    args = ap.parse_args()

    cfg = load_config(args.config)
    if args.seeds:
        cfg = cfg.with_seeds(parse_seeds(args.seeds))
    t0 = time.perf_counter()
    report = eh.run_experiment(cli.in_memory_pools(cfg), cfg.rewards, cfg.agent, cfg.mask, cfg.seeds, cfg.jobs)
    print(eh.render_rows(report.rows(), args.format), end="")
    print(f"\n{len(cfg.seeds)} seeds in {time.perf_counter() - t0:.0f}s")


if __name__ == "__main__":
    main()
