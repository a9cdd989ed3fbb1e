"""Server-side round loop: sampling, local training, aggregation, memory.

Randomness policy: every stream is derived from (tag, seed, round, client)
rather than from one long-lived generator. Client batches therefore do not
depend on who else was sampled, and a per-cluster phase that happens to hold
every client reproduces the plain trajectory bit for bit, because it draws
the same per-round sampling stream the single-server run would have drawn.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import similarity as simmod
from . import threat as threatmod
from .data import ClientDataset
from .errors import ConfigError, NumericalError
from .models import (ModelSpec, ParamVector, client_update, evaluate_accuracy,
                     loss_and_grad)

log = logging.getLogger(__name__)

_SAMPLE_TAG = 0x5A11
_CLIENT_TAG = 0xC11E
_INIT_TAG = 0x1217


def sampling_rng(seed: int, round_index: int) -> np.random.Generator:
    return np.random.default_rng([_SAMPLE_TAG, seed, round_index])


def client_rng(seed: int, round_index: int, client_id: int) -> np.random.Generator:
    return np.random.default_rng([_CLIENT_TAG, seed, round_index, client_id])


def init_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng([_INIT_TAG, seed])


@dataclass
class UpdateRecord:
    """Most recent update the server holds for one client."""
    delta: ParamVector
    origin_round: int
    n_k: int


@dataclass
class ServerState:
    spec: ModelSpec
    params: ParamVector
    seed: int
    aggregation: str = "weighted_mean"
    round_index: int = 0
    memory: dict[int, UpdateRecord] = field(default_factory=dict)


@dataclass
class RoundReport:
    round_index: int
    sampled: list[int]
    train_losses: dict[int, float]
    accuracies: dict[int, float]
    aggregation: str


def cohort_size(participation: float, num_eligible: int) -> int:
    """round(C * n), half away from zero, but never below one client."""
    return max(1, int(math.floor(participation * num_eligible + 0.5)))


def sample_clients(eligible: Iterable[int], participation: float,
                   rng: np.random.Generator) -> list[int]:
    pool = sorted(eligible)
    if not pool:
        raise ConfigError("cannot sample from an empty client pool")
    if not 0.0 < participation <= 1.0:
        raise ConfigError(f"participation must be in (0, 1], got {participation}")
    m = cohort_size(participation, len(pool))
    picks = rng.choice(len(pool), size=m, replace=False)
    return sorted(pool[i] for i in picks)


def _check_updates(updates: Sequence[tuple[ParamVector, int]],
                   w_prev: ParamVector) -> None:
    if not updates:
        raise ConfigError("aggregation needs at least one update")
    for delta, n_k in updates:
        if delta.spec_digest != w_prev.spec_digest:
            raise ConfigError("update and global params come from different specs")
        if n_k <= 0:
            raise ConfigError(f"client weight must be positive, got {n_k}")


def aggregate_weighted_mean(updates: Sequence[tuple[ParamVector, int]],
                            w_prev: ParamVector) -> ParamVector:
    """w_prev minus the sample-count-weighted mean of the deltas.

    Weights are n_k / sum(n_k) over the cohort, summed in the order given
    (callers pass ascending client id so reruns are bit-identical).
    """
    _check_updates(updates, w_prev)
    total = float(sum(n for _, n in updates))
    step = np.zeros_like(w_prev.values)
    for delta, n_k in updates:
        step += (n_k / total) * delta.values
    return ParamVector(w_prev.values - step, w_prev.spec_digest)


def aggregate_coordinate_median(updates: Sequence[tuple[ParamVector, int]],
                                w_prev: ParamVector) -> ParamVector:
    """w_prev minus the per-coordinate median of the deltas (unweighted).

    Robust while honest clients form the majority of the cohort; an even
    cohort takes the mean of the two middle values per coordinate.
    """
    _check_updates(updates, w_prev)
    stacked = np.stack([delta.values for delta, _ in updates])
    return ParamVector(w_prev.values - np.median(stacked, axis=0),
                       w_prev.spec_digest)


_AGGREGATORS = {
    "weighted_mean": aggregate_weighted_mean,
    "coordinate_median": aggregate_coordinate_median,
}


def run_round(server: ServerState, clients: Mapping[int, ClientDataset],
              epochs: int, batch_size: int, lr: float, participation: float,
              threat: threatmod.ThreatModel | None = None,
              sim: simmod.SimilarityMatrix | None = None,
              eligible: Iterable[int] | None = None) -> RoundReport:
    """One federation round against the clients in ``eligible``.

    Samples a cohort, runs local training per client, lets the threat model
    replace attacker updates, stores every received update (malicious ones
    included) in server memory, aggregates, and notifies the similarity
    matrix about the newly stored records.
    """
    t = server.round_index + 1
    pool = sorted(eligible) if eligible is not None else sorted(clients)
    cohort = sample_clients(pool, participation, sampling_rng(server.seed, t))

    results: list[tuple[int, ParamVector, int]] = []
    train_losses: dict[int, float] = {}
    for cid in cohort:
        ds = clients[cid]
        loss_before, _ = loss_and_grad(server.spec, server.params, *ds.train)
        train_losses[cid] = loss_before
        try:
            delta, n_k = client_update(server.spec, server.params, *ds.train,
                                       epochs, batch_size, lr,
                                       client_rng(server.seed, t, cid))
        except NumericalError as exc:
            raise NumericalError(str(exc), round_index=t, client_id=cid) from exc
        delta = threatmod.intercept(threat, cid, delta)
        results.append((cid, delta, n_k))
    results = threatmod.finalize_cohort(threat, results, server.params)

    for cid, delta, n_k in results:
        server.memory[cid] = UpdateRecord(delta, t, n_k)

    aggregator = _AGGREGATORS.get(server.aggregation)
    if aggregator is None:
        raise ConfigError(f"unknown aggregation rule {server.aggregation!r}")
    server.params = aggregator([(d, n) for _, d, n in results], server.params)
    server.round_index = t

    if sim is not None:
        simmod.ingest_round(sim, server.memory, cohort, t)

    accuracies = {cid: evaluate_accuracy(server.spec, server.params, *ds.test)
                  for cid, ds in sorted(clients.items())}
    return RoundReport(t, cohort, train_losses, accuracies, server.aggregation)


def run_cluster_phase(partition: Mapping[int, int], start_params: ParamVector,
                      clients: Mapping[int, ClientDataset], spec: ModelSpec,
                      epochs: int, batch_size: int, lr: float,
                      participation: float, seed: int, start_round: int,
                      num_rounds: int, aggregation: str = "weighted_mean",
                      threat: threatmod.ThreatModel | None = None,
                      ) -> tuple[dict[int, ServerState], list[tuple[int, RoundReport]]]:
    """Retrain one independent server per cluster, all seeded from w_T.

    Cluster cohorts are sampled within the cluster only, and the similarity
    matrix is left untouched. Round indices continue from ``start_round`` so
    client batch streams do not repeat phase-one batches.
    """
    members: dict[int, list[int]] = {}
    for cid, cluster in partition.items():
        members.setdefault(cluster, []).append(cid)

    servers: dict[int, ServerState] = {}
    reports: list[tuple[int, RoundReport]] = []
    for cluster in sorted(members):
        if not members[cluster]:
            log.warning("cluster %d is empty, skipping", cluster)
            continue
        servers[cluster] = ServerState(spec, start_params, seed,
                                       aggregation=aggregation,
                                       round_index=start_round)
    for _ in range(num_rounds):
        for cluster in sorted(servers):
            local = {cid: clients[cid] for cid in sorted(members[cluster])}
            report = run_round(servers[cluster], local, epochs, batch_size, lr,
                               participation, threat=threat,
                               eligible=local.keys())
            reports.append((cluster, report))
    return servers, reports
