"""Experiment orchestration: run a configured federation end to end.

A run has two phases. Phase one trains a single global model for
``rounds`` federation rounds while the server ingests every stored update
into the client-similarity matrix. If clustering is enabled, the final
matrix is partitioned and phase two retrains one independent model per
cluster for ``cluster_rounds`` rounds, each seeded from the phase-one
weights. Clients that were never sampled get a cluster afterwards by
evaluating each cluster model on their own test split.

All metric rows are formatted with fixed precision at creation time, so a
rerun with the same seed writes a byte-identical metrics CSV. The manifest
is the only output file allowed to differ (it carries a timestamp).
"""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping

import numpy as np

from .clustering import (
    ClusterPartition,
    assign_unsampled,
    cluster_clients,
    purity,
)
from .config import (
    ASSIGN_AT_CLUSTERING,
    ASSIGN_POST_PHASE2,
    CLUSTERING_FLIC,
    THREAT_NONE,
    ExperimentConfig,
)
from .data import ClientDataset, build_scenario, load_idx
from .errors import ConfigError
from .federation import (
    RoundReport,
    ServerState,
    client_rng,
    init_rng,
    run_cluster_phase,
    run_round,
)
from .models import (
    ParamVector,
    client_update,
    evaluate_accuracy,
    init_params,
)
from .similarity import (
    SimilarityMatrix,
    update_distance_bound,
    write_similarity_csv,
)
from .threat import KIND_OMNISCIENT, ThreatModel

METRICS_HEADER = ("round", "phase", "cluster", "mean_accuracy",
                  "std_accuracy", "n_clusters", "purity", "attacker_cluster")
PARTITION_HEADER = ("client_id", "cluster_id", "ground_truth_group",
                    "assigned_via")
VIA_LOUVAIN = "louvain"
VIA_UNSAMPLED = "unsampled-eval"


def _fmt(x: float) -> str:
    return f"{x:.6f}"


@dataclass
class DiagnosticPoint:
    """Per-round clustering readout taken without influencing training."""
    round_index: int
    n_stored: int
    n_clusters: int
    purity: float

    @property
    def all_singletons(self) -> bool:
        return self.n_clusters == self.n_stored


@dataclass
class ExperimentResult:
    """Everything a run produced, for tests and downstream tooling."""

    config: ExperimentConfig
    seed: int
    clients: dict[int, ClientDataset]
    effective_groups: dict[int, int]
    global_server: ServerState
    global_history: list[ParamVector]
    phase1_reports: list[RoundReport]
    sim: SimilarityMatrix | None
    partition: ClusterPartition | None
    purity_at_split: float | None
    cluster_servers: dict[int, ServerState]
    phase2_reports: list[tuple[int, RoundReport]]
    diagnostics: list[DiagnosticPoint]
    metrics_rows: list[tuple[str, ...]]
    final_accuracies: dict[int, float]
    out_dir: Path | None = None
    written: list[str] = field(default_factory=list)

    def cluster_of(self, client_id: int) -> int | None:
        if self.partition is None:
            return None
        if client_id in self.partition.assignment:
            return self.partition.assignment[client_id]
        return self.partition.extra.get(client_id)


def evaluate_clients(spec, params: ParamVector,
                     clients: Mapping[int, ClientDataset]) -> dict[int, float]:
    """Score one model on every client's own test split."""
    scores: dict[int, float] = {}
    for cid in sorted(clients):
        inputs, labels = clients[cid].test
        if len(labels) == 0:
            raise ConfigError(f"client {cid} has an empty test split")
        scores[cid] = evaluate_accuracy(spec, params, inputs, labels)
    return scores


def effective_groups(config: ExperimentConfig,
                     clients: Mapping[int, ClientDataset]) -> dict[int, int]:
    """Ground-truth group per client, with attackers split into their own
    group: a clustering is only considered pure if no attacker lands in a
    cluster together with a loyal client."""
    attacker_group = config.scenario.num_groups
    groups = {}
    for cid, ds in clients.items():
        if cid in config.attacker_ids:
            groups[cid] = attacker_group
        else:
            groups[cid] = ds.group_id
    return groups


def _build_threat(config: ExperimentConfig,
                  param_template: ParamVector) -> ThreatModel | None:
    if config.threat_kind == THREAT_NONE:
        return None
    target = None
    if config.threat_kind == KIND_OMNISCIENT:
        if config.threat_target == "zeros":
            values = np.zeros_like(param_template.values)
        else:
            values = np.loadtxt(config.threat_target, dtype=np.float64).ravel()
            if values.shape != param_template.values.shape:
                raise ConfigError(
                    f"threat.target: file holds {values.size} values, model "
                    f"has {param_template.values.size} parameters")
        target = ParamVector(values, param_template.spec_digest)
    return ThreatModel(config.threat_kind, frozenset(config.attacker_ids),
                       target=target)


def _mean_std(values: list[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std())


def _pre_row(report: RoundReport, n_clusters: int | None,
             pur: float | None) -> tuple[str, ...]:
    mean, std = _mean_std([report.accuracies[c]
                           for c in sorted(report.accuracies)])
    return (str(report.round_index), "pre", "global", _fmt(mean), _fmt(std),
            "" if n_clusters is None else str(n_clusters),
            "" if pur is None else _fmt(pur), "")


def _post_row(cluster: int, report: RoundReport, n_clusters: int,
              pur: float | None, attacker_flag: str) -> tuple[str, ...]:
    mean, std = _mean_std([report.accuracies[c]
                           for c in sorted(report.accuracies)])
    return (str(report.round_index), "post", str(cluster), _fmt(mean),
            _fmt(std), str(n_clusters),
            "" if pur is None else _fmt(pur), attacker_flag)


def run_experiment(config: ExperimentConfig, seed: int = 0,
                   out_dir: str | Path | None = None,
                   diagnostic: bool | None = None,
                   write_outputs: bool = True) -> ExperimentResult:
    """Execute one seeded run and (optionally) write its output files.

    ``diagnostic`` overrides the config's per-round clustering switch and
    ``out_dir`` overrides the output directory. With ``write_outputs``
    false, the result is returned without touching the filesystem.
    """
    started = time.monotonic()
    diag_on = (config.diagnostic_per_round if diagnostic is None
               else diagnostic)
    flic = config.clustering == CLUSTERING_FLIC

    scenario = dataclasses.replace(config.scenario, seed=seed)
    raw = None
    if config.raw_images:
        raw = (load_idx(config.raw_images), load_idx(config.raw_labels))
    clients = {ds.client_id: ds for ds in build_scenario(scenario, raw=raw)}
    groups = effective_groups(config, clients)

    spec = config.model
    params0 = init_params(spec, init_rng(seed))
    server = ServerState(spec, params0, seed, aggregation=config.aggregation)
    threat = _build_threat(config, params0)
    sim = SimilarityMatrix.empty(scenario.num_clients) if flic else None

    # --- phase one ---------------------------------------------------------
    history = [server.params]
    phase1: list[RoundReport] = []
    diag_trace: list[DiagnosticPoint] = []
    metrics: list[tuple[str, ...]] = []
    snapshots: dict[int, SimilarityMatrix] = {}
    snap_rounds = set(config.snapshot_rounds) if flic else set()
    if 0 in snap_rounds:
        snapshots[0] = dataclasses.replace(sim, values=sim.values.copy(),
                                           entry_round=sim.entry_round.copy())

    phase1_rounds = config.rounds
    if not flic:
        phase1_rounds += config.cluster_rounds

    for _ in range(phase1_rounds):
        report = run_round(server, clients, config.epochs, config.batch_size,
                           config.learning_rate, config.participation,
                           threat=threat, sim=sim)
        history.append(server.params)
        phase1.append(report)

        n_clusters = pur = None
        if diag_on and flic:
            probe = cluster_clients(sim, list(clients))
            n_clusters = probe.num_clusters()
            pur = purity(probe.assignment, groups)
            diag_trace.append(DiagnosticPoint(
                report.round_index, len(server.memory), n_clusters, pur))
        metrics.append(_pre_row(report, n_clusters, pur))

        if report.round_index in snap_rounds:
            snapshots[report.round_index] = dataclasses.replace(
                sim, values=sim.values.copy(),
                entry_round=sim.entry_round.copy())

    # --- split and phase two -----------------------------------------------
    partition = None
    purity_at_split = None
    cluster_servers: dict[int, ServerState] = {}
    phase2: list[tuple[int, RoundReport]] = []

    if flic:
        partition = cluster_clients(sim, list(clients))
        purity_at_split = purity(partition.assignment, groups)

        training_partition = dict(partition.assignment)
        if config.assign_unsampled == ASSIGN_AT_CLUSTERING and partition.unassigned:
            at_t = {c: server.params
                    for c in sorted(set(partition.assignment.values()))}
            partition.extra.update(
                assign_unsampled(partition, at_t, spec, clients))
            training_partition.update(partition.extra)

        cluster_servers, phase2 = run_cluster_phase(
            training_partition, server.params, clients, spec, config.epochs,
            config.batch_size, config.learning_rate, config.participation,
            seed, start_round=config.rounds, num_rounds=config.cluster_rounds,
            aggregation=config.aggregation, threat=threat)

        members: dict[int, set[int]] = {}
        for cid, cl in training_partition.items():
            members.setdefault(cl, set()).add(cid)
        n_final = len(cluster_servers) or partition.num_clusters()
        for cluster, report in phase2:
            flag = ""
            if config.is_attack():
                hit = any(c in config.attacker_ids for c in members[cluster])
                flag = "1" if hit else "0"
            metrics.append(_post_row(cluster, report, n_final,
                                     purity_at_split, flag))

        if config.assign_unsampled == ASSIGN_POST_PHASE2 and partition.unassigned:
            models = {c: srv.params for c, srv in cluster_servers.items()}
            partition.extra.update(
                assign_unsampled(partition, models, spec, clients))

    # --- final per-client accuracies ---------------------------------------
    final_acc: dict[int, float] = {}
    for cid in sorted(clients):
        if flic:
            cluster = partition.assignment.get(cid, partition.extra.get(cid))
            model = (cluster_servers[cluster].params
                     if cluster in cluster_servers else server.params)
        else:
            model = server.params
        final_acc[cid] = evaluate_accuracy(spec, model, *clients[cid].test)

    result = ExperimentResult(
        config=config, seed=seed, clients=clients, effective_groups=groups,
        global_server=server, global_history=history, phase1_reports=phase1,
        sim=sim, partition=partition, purity_at_split=purity_at_split,
        cluster_servers=cluster_servers, phase2_reports=phase2,
        diagnostics=diag_trace, metrics_rows=metrics,
        final_accuracies=final_acc)

    if write_outputs:
        target = Path(out_dir) if out_dir is not None else Path(config.out_dir)
        _write_outputs(result, target, snapshots,
                       runtime=time.monotonic() - started)
    return result


def _write_outputs(result: ExperimentResult, out_dir: Path,
                   snapshots: Mapping[int, SimilarityMatrix],
                   runtime: float) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[str] = []

    metrics_path = out_dir / "metrics.csv"
    with open(metrics_path, "w", newline="\n") as fh:
        fh.write(",".join(METRICS_HEADER) + "\n")
        for row in result.metrics_rows:
            fh.write(",".join(row) + "\n")
    written.append(metrics_path.name)

    if result.partition is not None:
        path = out_dir / "partition.csv"
        with open(path, "w", newline="\n") as fh:
            fh.write(",".join(PARTITION_HEADER) + "\n")
            for cid in sorted(result.clients):
                cluster = result.cluster_of(cid)
                via = (VIA_LOUVAIN if cid in result.partition.assignment
                       else VIA_UNSAMPLED)
                fh.write(f"{cid},{cluster},{result.effective_groups[cid]},"
                         f"{via}\n")
        written.append(path.name)

    for round_index in sorted(snapshots):
        path = out_dir / f"similarity_round_{round_index}.csv"
        write_similarity_csv(snapshots[round_index], path)
        written.append(path.name)

    from . import __version__

    manifest = {
        "config": result.config.sections,
        "seed": result.seed,
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "runtime_seconds": round(runtime, 3),
        "files": written,
        "n_clusters": (result.partition.num_clusters()
                       if result.partition else None),
        "purity": result.purity_at_split,
        "modularity": (result.partition.modularity
                       if result.partition else None),
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    written.append("manifest.json")

    result.out_dir = out_dir
    result.written = written


def summarize(result: ExperimentResult) -> dict[str, float | int | None]:
    """Headline numbers for one run, used by the multi-seed summary."""
    last_pre = result.phase1_reports[-1]
    pre_mean, _ = _mean_std([last_pre.accuracies[c]
                             for c in sorted(last_pre.accuracies)])
    post_mean, _ = _mean_std([result.final_accuracies[c]
                              for c in sorted(result.final_accuracies)])
    return {
        "pre_accuracy": pre_mean,
        "post_accuracy": post_mean,
        "purity": result.purity_at_split,
        "n_clusters": (result.partition.num_clusters()
                       if result.partition else None),
    }


def run_repeated(config: ExperimentConfig, base_seed: int, repeat: int,
                 out_root: str | Path | None = None,
                 diagnostic: bool | None = None,
                 write_outputs: bool = True) -> list[ExperimentResult]:
    """Run seeds base_seed .. base_seed + repeat - 1.

    Each seed writes into ``<out>/seed_<s>/``; a summary CSV with one row
    per seed plus mean and std rows lands next to them.
    """
    if repeat < 1:
        raise ConfigError(f"repeat must be >= 1, got {repeat}")
    root = Path(out_root) if out_root is not None else Path(config.out_dir)
    results = []
    for s in range(base_seed, base_seed + repeat):
        results.append(run_experiment(
            config, seed=s, out_dir=root / f"seed_{s}" if write_outputs else None,
            diagnostic=diagnostic, write_outputs=write_outputs))

    if write_outputs:
        rows = [summarize(r) for r in results]
        keys = ("pre_accuracy", "post_accuracy", "purity", "n_clusters")
        with open(root / "summary.csv", "w", newline="\n") as fh:
            fh.write("seed," + ",".join(keys) + "\n")
            for r, row in zip(results, rows):
                cells = ["" if row[k] is None else _fmt(float(row[k]))
                         for k in keys]
                fh.write(f"{r.seed}," + ",".join(cells) + "\n")
            for stat, fn in (("mean", np.mean), ("std", np.std)):
                cells = []
                for k in keys:
                    vals = [row[k] for row in rows if row[k] is not None]
                    cells.append(_fmt(float(fn(vals))) if vals else "")
                fh.write(f"{stat}," + ",".join(cells) + "\n")
    return results


def collect_distance_bounds(result: ExperimentResult,
                            p: float = 2) -> list[tuple]:
    """Recompute the staleness inequality for every stored client pair.

    Replays client j's honest local training against the recorded global
    history, so it is only meaningful for threat-free runs. Returns
    ``(i, j, t, tau, bound)`` tuples.
    """
    cfg = result.config

    def retrain(cid: int, start: ParamVector, round_index: int) -> ParamVector:
        ds = result.clients[cid]
        delta, _ = client_update(cfg.model, start, *ds.train, cfg.epochs,
                                 cfg.batch_size, cfg.learning_rate,
                                 client_rng(result.seed, round_index, cid))
        return delta

    memory = result.global_server.memory
    out = []
    for i in sorted(memory):
        for j in sorted(memory):
            if j <= i:
                continue
            bound = update_distance_bound(memory, result.global_history,
                                          i, j, retrain, p=p)
            out.append((i, j, memory[i].origin_round,
                        memory[j].origin_round, bound))
    return out
