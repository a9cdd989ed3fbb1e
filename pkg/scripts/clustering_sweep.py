#!/usr/bin/env python3
"""Multi-seed sweep of one clustering experiment config.

Runs the config once per seed, writes the usual per-run output tree plus a
summary.csv, and prints the per-seed table. The seed_*/metrics.csv files are
what the plot tool's accuracy and purity figures consume, and each run
directory also holds the similarity snapshots for the heatmap figure.
"""

import argparse

from flicsim.config import load_config
from flicsim.harness import run_repeated, summarize


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("config", help="experiment config, e.g. "
                                       "configs/label_swap.ini")
    parser.add_argument("--seeds", type=int, default=20,
                        help="number of consecutive seeds to run")
    parser.add_argument("--base-seed", type=int, default=0)
    parser.add_argument("--out", default=None,
                        help="output root (default: the config's dir + /sweep)")
    args = parser.parse_args()

    cfg = load_config(args.config)
    out_root = args.out if args.out is not None else cfg.out_dir + "/sweep"
    results = run_repeated(cfg, args.base_seed, args.seeds, out_root=out_root)

    print(f"{'seed':>4} {'pre':>7} {'post':>7} {'purity':>7} {'clusters':>8}")
    pre = post = 0.0
    for result in results:
        summary = summarize(result)
        pre += summary["pre_accuracy"]
        post += summary["post_accuracy"]
        purity = "" if summary["purity"] is None else f"{summary['purity']:.3f}"
        n_cl = "" if summary["n_clusters"] is None else summary["n_clusters"]
        print(f"{result.seed:>4} {summary['pre_accuracy']:>7.3f} "
              f"{summary['post_accuracy']:>7.3f} {purity:>7} {n_cl:>8}")
    n = len(results)
    print(f"mean {pre / n:>7.3f} {post / n:>7.3f}")
    print(f"outputs under {out_root}/")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
