"""Command line entry point.

``flicsim run <config.ini>`` executes one experiment; ``--repeat N`` sweeps
N consecutive seeds and adds an aggregate summary. Configuration problems
exit with status 2 and a message naming the offending key; a numerical
failure during training exits with status 3 and names the round and client
where it happened.
"""

from __future__ import annotations

import argparse
import sys

from .config import load_config
from .errors import ConfigError, NumericalError
from .harness import run_experiment, run_repeated, summarize


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flicsim",
        description="federated-learning simulator with incremental "
                    "client clustering")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute one configured experiment")
    run.add_argument("config", help="path to an INI experiment config")
    run.add_argument("--seed", type=int, default=0,
                     help="base RNG seed (default 0)")
    run.add_argument("--out", default=None,
                     help="output directory (overrides [output] dir)")
    run.add_argument("--repeat", type=int, default=1,
                     help="run this many consecutive seeds")
    run.add_argument("--diagnostic-clustering", action="store_true",
                     help="also cluster (observe-only) after every round")
    return parser


def _run(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    diagnostic = True if args.diagnostic_clustering else None
    if args.repeat > 1:
        results = run_repeated(config, args.seed, args.repeat,
                               out_root=args.out, diagnostic=diagnostic)
        root = args.out if args.out is not None else config.out_dir
        print(f"{len(results)} runs complete, summary in {root}/summary.csv")
    else:
        result = run_experiment(config, seed=args.seed, out_dir=args.out,
                                diagnostic=diagnostic)
        stats = summarize(result)
        bits = [f"seed {result.seed}",
                f"final accuracy {stats['post_accuracy']:.4f}"]
        if stats["purity"] is not None:
            bits.append(f"purity {stats['purity']:.3f}")
        if stats["n_clusters"] is not None:
            bits.append(f"{stats['n_clusters']} clusters")
        print(", ".join(bits) + f", outputs in {result.out_dir}")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
