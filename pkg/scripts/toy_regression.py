#!/usr/bin/env python3
"""Two-client tug-of-war on 1-D regression, printed round by round.

Shows the core tension that motivates clustering: the shared weight parks at
the midpoint of the two client optima while every round of local training
pulls each client right back toward its own slope.
"""

import argparse
import dataclasses
from pathlib import Path

from flicsim.config import load_config
from flicsim.data import build_scenario
from flicsim.federation import ServerState, init_rng, run_round
from flicsim.models import init_params


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config",
                        default=str(Path(__file__).resolve().parent.parent
                                    / "configs" / "regression_toy.ini"))
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    cfg = load_config(args.config)
    scenario = dataclasses.replace(cfg.scenario, seed=args.seed)
    clients = {c.client_id: c for c in build_scenario(scenario)}
    server = ServerState(cfg.model, init_params(cfg.model, init_rng(args.seed)),
                         args.seed, aggregation=cfg.aggregation)

    slopes = {cid: scenario.slopes[ds.group_id]
              for cid, ds in clients.items()}
    print(f"client optima: {slopes}")
    print(f"{'round':>5} {'global':>8} " +
          " ".join(f"{f'local_{cid}':>8}" for cid in sorted(clients)))
    for _ in range(cfg.rounds):
        w_start = server.params.values[0]
        run_round(server, clients, cfg.epochs, cfg.batch_size,
                  cfg.learning_rate, cfg.participation)
        locals_now = {cid: w_start - server.memory[cid].delta.values[0]
                      for cid in sorted(clients)}
        print(f"{server.round_index:>5} {server.params.values[0]:>8.3f} " +
              " ".join(f"{locals_now[cid]:>8.3f}" for cid in sorted(clients)))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
