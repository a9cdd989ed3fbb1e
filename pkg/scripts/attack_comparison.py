#!/usr/bin/env python3
"""Head-to-head run of every attack arm, one table at the end.

Arms: attack-free baselines (mean and median servers), the clustering
defense against 12 of 20 sign-flipping clients, the same raid against an
undefended mean server and a coordinate-median server, and the 6-attacker
raid that the median handles on its own.

Accuracy is always reported as the mean over the clients that did not
attack. Seed 0 of every arm writes its full output tree under --out so the
plot tool has real files to chew on; the other seeds only contribute to the
table and to comparison.csv.
"""

import argparse
from pathlib import Path

import numpy as np

from flicsim.config import load_config
from flicsim.harness import run_experiment

ARMS = (
    ("attack_free", "attack_free.ini"),
    ("attack_free_median", "attack_free_median.ini"),
    ("flic_majority", "attack_majority_flic.ini"),
    ("undefended_mean", "attack_majority_mean.ini"),
    ("undefended_median", "attack_majority_median.ini"),
    ("median_minority", "attack_minority_median.ini"),
)


def loyal_mean(result) -> float:
    attackers = set(result.config.attacker_ids)
    loyal = [a for c, a in result.final_accuracies.items()
             if c not in attackers]
    return float(np.mean(loyal))


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seeds", type=int, default=5)
    parser.add_argument("--base-seed", type=int, default=0)
    parser.add_argument("--out", default="out/attack")
    parser.add_argument("--configs",
                        default=str(Path(__file__).resolve().parent.parent
                                    / "configs"))
    args = parser.parse_args()

    out_root = Path(args.out)
    out_root.mkdir(parents=True, exist_ok=True)
    table: dict[str, list[float]] = {}
    for arm, filename in ARMS:
        cfg = load_config(str(Path(args.configs) / filename))
        scores = []
        for s in range(args.base_seed, args.base_seed + args.seeds):
            write = s == args.base_seed
            result = run_experiment(cfg, seed=s,
                                    out_dir=out_root / arm if write else None,
                                    write_outputs=write)
            scores.append(loyal_mean(result))
        table[arm] = scores
        print(f"{arm:>18}: " + " ".join(f"{a:.3f}" for a in scores)
              + f"  mean {np.mean(scores):.3f}")

    with open(out_root / "comparison.csv", "w", newline="\n") as fh:
        fh.write("arm,seed,loyal_accuracy\n")
        for arm, scores in table.items():
            for s, acc in zip(range(args.base_seed,
                                    args.base_seed + args.seeds), scores):
                fh.write(f"{arm},{s},{acc:.6f}\n")
    print(f"outputs under {out_root}/")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
