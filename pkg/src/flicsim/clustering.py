"""Community detection over the similarity matrix, plus partition scoring.

The graph uses clients as nodes, strictly positive similarities as edge
weights, and each stored client's self-similarity (2) as a self-loop. The
self-loops are load-bearing: under weighted modularity they make a clique of
near-uniform weights prefer singleton communities, so early rounds (when
every client's update looks like every other's) yield one community per
sampled client, and real groups only coalesce once within-group similarity
separates from the background. Without them the very first round would glue
unrelated clients into one block.

Louvain is implemented by hand because its tie-breaking and scan order are
part of this simulator's determinism contract: a node moves only for a
strictly positive gain, gain ties go to the lowest community label, and
aggregation repeats until a full level improves modularity by less than
1e-9. Plain single-order Louvain walks into avoidable local optima on small
dense graphs, so each level's local-move phase runs under four fixed scan
orders (ascending, descending, by strength up, by strength down) keeping
the best result, and the converged partition gets a node-level polish:
single-node moves to any community, whole-community merges, exhaustive
two-way splits of small communities, and merge-then-reoptimize kicks, all
enumerated in fixed ascending order and accepted only on strictly positive
gain, so the search stays greedy and fully deterministic. Final cluster ids
are contiguous and ordered by each cluster's smallest member id.

Modularity convention: the adjacency value of a self-loop appears once on
the diagonal; a node's strength is the plain row sum. Aggregating a
partition into super-nodes preserves modularity exactly under this
convention, which the tests exercise.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import ConfigError, CoverageError
from .models import ParamVector, evaluate_accuracy
from .similarity import SimilarityMatrix

log = logging.getLogger(__name__)

_LEVEL_GAIN_MIN = 1e-9


@dataclass
class WeightedGraph:
    """Undirected weighted graph; ``adj`` stores both directions of an edge."""

    nodes: list[int]
    adj: dict[int, dict[int, float]]

    def edge_list(self) -> list[tuple[int, int, float]]:
        out = []
        for i in self.nodes:
            for j, w in self.adj[i].items():
                if j >= i:
                    out.append((i, j, w))
        return sorted(out)


def build_graph(sim: SimilarityMatrix) -> WeightedGraph:
    """Nodes are clients with any computed entry; edges need weight > 0."""
    computed = sim.entry_round >= 0
    nodes = [i for i in range(sim.num_clients) if computed[i].any()]
    adj: dict[int, dict[int, float]] = {i: {} for i in nodes}
    for i in nodes:
        for j in nodes:
            if j < i:
                continue
            if computed[i, j] and sim.values[i, j] > 0.0:
                w = float(sim.values[i, j])
                adj[i][j] = w
                if i != j:
                    adj[j][i] = w
    return WeightedGraph(nodes, adj)


def _strengths(adj: Mapping[int, Mapping[int, float]]) -> dict[int, float]:
    return {i: float(sum(nbrs.values())) for i, nbrs in adj.items()}


def _modularity_of(adj: Mapping[int, Mapping[int, float]],
                   node2com: Mapping[int, int]) -> float:
    strength = _strengths(adj)
    two_m = sum(strength.values())
    if two_m == 0.0:
        return 0.0
    internal: dict[int, float] = {}
    total: dict[int, float] = {}
    for i, nbrs in adj.items():
        c = node2com[i]
        total[c] = total.get(c, 0.0) + strength[i]
        for j, w in nbrs.items():
            if node2com[j] == c:
                internal[c] = internal.get(c, 0.0) + w
    q = 0.0
    for c, tot in total.items():
        q += internal.get(c, 0.0) / two_m - (tot / two_m) ** 2
    return q


def modularity(graph: WeightedGraph, partition: Mapping[int, int]) -> float:
    """Weighted modularity of ``partition`` over the graph's node set."""
    missing = [n for n in graph.nodes if n not in partition]
    if missing:
        raise CoverageError(f"partition misses nodes {missing[:5]}")
    return _modularity_of(graph.adj, partition)


def _one_level(adj: Mapping[int, Mapping[int, float]], two_m: float,
               strength: Mapping[int, float],
               order: list[int]) -> dict[int, int]:
    """Local-move phase; returns node -> community label (labels are node ids)."""
    node2com = {i: i for i in adj}
    com_total = dict(strength)
    moved = True
    while moved:
        moved = False
        for i in order:
            home = node2com[i]
            k_i = strength[i]
            link: dict[int, float] = {}
            for j, w in adj[i].items():
                if j == i:
                    continue
                c = node2com[j]
                link[c] = link.get(c, 0.0) + w
            com_total[home] -= k_i

            stay_gain = link.get(home, 0.0) - com_total[home] * k_i / two_m
            best_com, best_gain = home, stay_gain
            for c in sorted(link):
                if c == home:
                    continue
                gain = link[c] - com_total[c] * k_i / two_m
                if gain > best_gain:
                    best_com, best_gain = c, gain

            com_total[best_com] += k_i
            if best_com != home:
                node2com[i] = best_com
                moved = True
    return node2com


def _scan_orders(adj: Mapping[int, Mapping[int, float]],
                 strength: Mapping[int, float]) -> list[list[int]]:
    """Four fixed node orders for the local-move phase; ties go to low ids."""
    asc = sorted(adj)
    return [asc,
            list(reversed(asc)),
            sorted(adj, key=lambda i: (strength[i], i)),
            sorted(adj, key=lambda i: (-strength[i], i))]


def _tot_of(node2com: Mapping[int, int],
            strength: Mapping[int, float]) -> dict[int, float]:
    tot: dict[int, float] = {}
    for node, com in node2com.items():
        tot[com] = tot.get(com, 0.0) + strength[node]
    return tot


_GAIN_MIN = 1e-12       # strict improvement threshold for polish steps
_SPLIT_SIZE_MAX = 12    # exhaustive 2-way splits only for communities this small


def _improve_partition(adj: Mapping[int, Mapping[int, float]],
                       strength: Mapping[int, float], two_m: float,
                       node2com: dict[int, int]) -> None:
    """Greedy node moves, community merges, and small-community splits.

    Mutates ``node2com`` until none of the three step kinds improves
    modularity by more than ``_GAIN_MIN``. Every candidate list is scanned
    in ascending order, so the walk is deterministic.
    """
    improved = True
    while improved:
        improved = False

        # single-node moves, to any live community or out into a fresh one
        for i in sorted(adj):
            home = node2com[i]
            k_i = strength[i]
            link: dict[int, float] = {}
            for j, w in adj[i].items():
                if j == i:
                    continue
                c = node2com[j]
                link[c] = link.get(c, 0.0) + w
            tot = _tot_of(node2com, strength)
            tot_home_wo = tot[home] - k_i
            link_home = link.get(home, 0.0)
            alone = sum(1 for c in node2com.values() if c == home) == 1
            best_dq, best_target = _GAIN_MIN, None
            for c in sorted(tot):
                if c == home:
                    continue
                dq = (2.0 * (link.get(c, 0.0) - link_home) / two_m
                      - 2.0 * k_i * (tot[c] - tot_home_wo) / two_m ** 2)
                if dq > best_dq:
                    best_dq, best_target = dq, c
            if not alone:
                dq = (-2.0 * link_home / two_m
                      + 2.0 * k_i * tot_home_wo / two_m ** 2)
                if dq > best_dq:
                    best_dq, best_target = dq, max(node2com.values()) + 1
            if best_target is not None:
                node2com[i] = best_target
                improved = True

        # repeated best positive community merge
        while True:
            tot = _tot_of(node2com, strength)
            labels = sorted(tot)
            cut: dict[tuple[int, int], float] = {}
            for i, nbrs in adj.items():
                ci = node2com[i]
                for j, w in nbrs.items():
                    cj = node2com[j]
                    if ci < cj:
                        key = (ci, cj)
                        cut[key] = cut.get(key, 0.0) + w
            best_dq, best_pair = _GAIN_MIN, None
            for ai, a in enumerate(labels):
                for b in labels[ai + 1:]:
                    dq = (2.0 * cut.get((a, b), 0.0) / two_m
                          - 2.0 * tot[a] * tot[b] / two_m ** 2)
                    if dq > best_dq:
                        best_dq, best_pair = dq, (a, b)
            if best_pair is None:
                break
            a, b = best_pair
            for node in node2com:
                if node2com[node] == b:
                    node2com[node] = a
            improved = True

        # best positive exhaustive 2-way split of one small community
        members: dict[int, list[int]] = {}
        for node, c in node2com.items():
            members.setdefault(c, []).append(node)
        tot = _tot_of(node2com, strength)
        best_dq, best_side = _GAIN_MIN, None
        for c in sorted(members):
            group = sorted(members[c])
            size = len(group)
            if size < 2 or size > _SPLIT_SIZE_MAX:
                continue
            in_group = set(group)
            for mask in range(1 << (size - 1)):
                side = [group[0]] + [group[k + 1] for k in range(size - 1)
                                     if (mask >> k) & 1]
                if len(side) == size:
                    continue
                side_set = set(side)
                cut_ab = sum(w for i in side for j, w in adj[i].items()
                             if j in in_group and j not in side_set)
                tot_a = sum(strength[i] for i in side)
                tot_b = tot[c] - tot_a
                dq = (-2.0 * cut_ab / two_m
                      + 2.0 * tot_a * tot_b / two_m ** 2)
                if dq > best_dq:
                    best_dq, best_side = dq, tuple(side)
        if best_side is not None:
            fresh = max(node2com.values()) + 1
            for node in best_side:
                node2com[node] = fresh
            improved = True


def _polish(adj: Mapping[int, Mapping[int, float]],
            assignment: Mapping[int, int]) -> dict[int, int]:
    """Escape the local optima plain greedy Louvain settles into.

    Improves the assignment to a move/merge/split fixpoint, then tries
    merge-then-reoptimize kicks: force two communities together, rerun the
    greedy steps, and keep the outcome only when modularity strictly rises.
    Kick pairs are enumerated by each community's smallest member, and the
    first improving kick restarts the loop, so the search is deterministic.
    """
    strength = _strengths(adj)
    two_m = sum(strength.values())
    if two_m == 0.0:
        return dict(assignment)
    best = dict(assignment)
    _improve_partition(adj, strength, two_m, best)
    best_q = _modularity_of(adj, best)
    while True:
        members: dict[int, list[int]] = {}
        for node, c in best.items():
            members.setdefault(c, []).append(node)
        labels = sorted(members, key=lambda c: min(members[c]))
        kicked = False
        for ai in range(len(labels)):
            for bi in range(ai + 1, len(labels)):
                a, b = labels[ai], labels[bi]
                trial = {n: (a if c == b else c) for n, c in best.items()}
                _improve_partition(adj, strength, two_m, trial)
                q = _modularity_of(adj, trial)
                if q > best_q + _GAIN_MIN:
                    best, best_q = trial, q
                    kicked = True
                    break
            if kicked:
                break
        if not kicked:
            return best


def _aggregate(adj: Mapping[int, Mapping[int, float]],
               node2com: Mapping[int, int]) -> tuple[dict, dict[int, int]]:
    """Collapse communities to super-nodes; labels become 0..n-1 ordered by
    each community's smallest member."""
    members: dict[int, list[int]] = {}
    for i, c in node2com.items():
        members.setdefault(c, []).append(i)
    ordered = sorted(members, key=lambda c: min(members[c]))
    relabel = {c: idx for idx, c in enumerate(ordered)}
    new_adj: dict[int, dict[int, float]] = {idx: {} for idx in range(len(ordered))}
    for i, nbrs in adj.items():
        ci = relabel[node2com[i]]
        row = new_adj[ci]
        for j, w in nbrs.items():
            cj = relabel[node2com[j]]
            # internal edges land on the super-node's diagonal: both
            # directions of an i-j edge and each self-loop once, which is
            # exactly the convention the modularity formula expects
            row[cj] = row.get(cj, 0.0) + w
    return new_adj, relabel


def louvain(graph: WeightedGraph) -> dict[int, int]:
    """Deterministic Louvain; returns node -> contiguous cluster id."""
    if not graph.nodes:
        return {}
    adj: dict[int, dict[int, float]] = {i: dict(nbrs)
                                        for i, nbrs in graph.adj.items()}
    membership = {n: n for n in graph.nodes}  # original node -> current node

    strength = _strengths(adj)
    two_m = sum(strength.values())
    if two_m == 0.0:
        assignment = {n: n for n in graph.nodes}
    else:
        q_prev = _modularity_of(adj, {i: i for i in adj})
        while True:
            best_level, best_q = None, -np.inf
            for order in _scan_orders(adj, strength):
                node2com = _one_level(adj, two_m, strength, order)
                q = _modularity_of(adj, node2com)
                if q > best_q:
                    best_level, best_q = node2com, q
            if best_q - q_prev < _LEVEL_GAIN_MIN:
                break
            q_prev = best_q
            adj, relabel = _aggregate(adj, best_level)
            membership = {orig: relabel[best_level[cur]]
                          for orig, cur in membership.items()}
            strength = _strengths(adj)
        assignment = _polish(graph.adj, membership)

    groups: dict[int, list[int]] = {}
    for node, com in assignment.items():
        groups.setdefault(com, []).append(node)
    final = {}
    for idx, com in enumerate(sorted(groups, key=lambda c: min(groups[c]))):
        for node in groups[com]:
            final[node] = idx
    return final


@dataclass
class ClusterPartition:
    assignment: dict[int, int]          # client -> cluster, Louvain-assigned
    unassigned: set[int]                # never-sampled clients
    modularity: float
    extra: dict[int, int] = field(default_factory=dict)  # later model-based adds

    def num_clusters(self) -> int:
        return len(set(self.assignment.values()))


def cluster_clients(sim: SimilarityMatrix, all_clients) -> ClusterPartition:
    """Build the graph from the similarity matrix and partition it."""
    graph = build_graph(sim)
    assignment = louvain(graph)
    q = modularity(graph, assignment) if graph.nodes else 0.0
    unassigned = set(all_clients) - set(assignment)
    return ClusterPartition(assignment, unassigned, q)


def purity(assignment: Mapping[int, int],
           ground_truth: Mapping[int, int]) -> float:
    """Fraction of assigned clients whose whole cluster shares their group.

    A client in a singleton cluster is pure by definition; clients not in
    ``assignment`` simply do not count. An empty assignment scores 1.0.
    """
    if not assignment:
        return 1.0
    members: dict[int, list[int]] = {}
    for cid, cluster in assignment.items():
        if cid not in ground_truth:
            raise CoverageError(f"no ground-truth group for client {cid}")
        members.setdefault(cluster, []).append(cid)
    pure = 0
    for group in members.values():
        labels = {ground_truth[cid] for cid in group}
        if len(labels) == 1:
            pure += len(group)
    return pure / len(assignment)


def assign_unsampled(partition: ClusterPartition,
                     cluster_models: Mapping[int, ParamVector],
                     spec, clients) -> dict[int, int]:
    """Give each never-sampled client the cluster whose model fits it best.

    Each candidate cluster's model is evaluated on the client's own test
    split; the highest accuracy wins and ties go to the lowest cluster id.
    """
    if not cluster_models:
        raise ConfigError("cannot assign clients without any cluster models")
    placed: dict[int, int] = {}
    for cid in sorted(partition.unassigned):
        ds = clients[cid]
        best_cluster, best_acc = None, -np.inf
        for cluster in sorted(cluster_models):
            acc = evaluate_accuracy(spec, cluster_models[cluster], *ds.test)
            if acc > best_acc:
                best_cluster, best_acc = cluster, acc
        placed[cid] = best_cluster
    return placed
