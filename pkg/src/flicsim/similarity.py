"""Incremental client-similarity matrix.

The server keeps, for every client, the most recent update it has received,
and maintains a K x K matrix of pairwise update similarities

    s(a, b) = 1 + cos(a, b)   in [0, 2].

After each round only the pairs incident to newly stored clients are
refreshed, so the per-round cost is O(|cohort| * |memory| * d) instead of
O(K^2 d). Entries therefore mix rounds: a stored pair compares client i's
round-t update against client j's update from whatever round j was last
sampled. Self-similarities sit on the diagonal (value 2 for every stored
client); they matter downstream, where they become graph self-loops that
stop the community search from gluing together nodes whose mutual
similarities carry no structure yet. Rows of never-sampled clients stay
zero with entry_round -1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import DiagnosticUnavailableError, ShapeError
from .models import ParamVector

_ZERO_NORM_SQ = 1e-24  # squared norm below this counts as a zero vector


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """1 + cos(a, b); 1.0 (the neutral value) if either vector is ~zero.

    The denominator is sqrt(dot(a,a) * dot(b,b)) rather than a product of
    norms so that s(x, x) is exactly 2 and s(x, -x) is exactly 0.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 1 or b.ndim != 1 or a.shape[0] != b.shape[0]:
        raise ShapeError(f"cosine needs equal-length vectors, got {a.shape} "
                         f"and {b.shape}")
    na2 = float(np.dot(a, a))
    nb2 = float(np.dot(b, b))
    if na2 < _ZERO_NORM_SQ or nb2 < _ZERO_NORM_SQ:
        return 1.0
    cos = float(np.dot(a, b)) / float(np.sqrt(na2 * nb2))
    return 1.0 + max(-1.0, min(1.0, cos))


@dataclass
class SimilarityMatrix:
    values: np.ndarray
    entry_round: np.ndarray
    num_clients: int
    eval_count: int = 0  # cosine evaluations performed, for cost assertions

    @classmethod
    def empty(cls, num_clients: int) -> "SimilarityMatrix":
        return cls(values=np.zeros((num_clients, num_clients)),
                   entry_round=np.full((num_clients, num_clients), -1,
                                       dtype=np.int64),
                   num_clients=num_clients)


def ingest_round(sim: SimilarityMatrix, memory: Mapping[int, Any],
                 newly_stored: Iterable[int], round_index: int) -> None:
    """Refresh every pair incident to a newly stored client (diagonal too)."""
    fresh = set(newly_stored)
    held = sorted(memory)
    for i in sorted(fresh):
        delta_i = memory[i].delta.values
        for j in held:
            if j in fresh and j < i:
                continue  # already refreshed from j's side this round
            s = cosine_similarity(delta_i, memory[j].delta.values)
            sim.eval_count += 1
            sim.values[i, j] = sim.values[j, i] = s
            sim.entry_round[i, j] = sim.entry_round[j, i] = round_index


def write_similarity_csv(sim: SimilarityMatrix, path) -> None:
    """Raw K x K matrix, comma separated, six significant digits."""
    with open(path, "w") as fh:
        for row in sim.values:
            fh.write(",".join(f"{v:.6g}" for v in row) + "\n")


@dataclass(frozen=True)
class UpdateDistanceBound:
    """Decomposition of how much staleness can distort one pairwise distance.

    ``cross_round_dist`` compares client i's fresh update with the stored
    (possibly stale) update of client j; ``same_round_dist`` is the distance
    had j retrained this round. Their gap is bounded by how far the broadcast
    weights drifted between the two source rounds (``global_drift``) plus how
    far j's locally trained weights moved (``local_drift``); the bound is a
    triangle inequality, so a violation means an implementation bug.
    """

    cross_round_dist: float
    same_round_dist: float
    global_drift: float
    local_drift: float

    @property
    def holds(self) -> bool:
        return (self.cross_round_dist - self.same_round_dist
                <= self.global_drift + self.local_drift)


def update_distance_bound(memory: Mapping[int, Any],
                          global_history: Sequence[ParamVector],
                          i: int, j: int,
                          retrain: Callable[[int, ParamVector, int], ParamVector],
                          p: float = 2) -> UpdateDistanceBound:
    """Measure the staleness distortion for the stored pair (i, j).

    ``global_history[r]`` must hold the global parameters after round r
    (index 0 is the initial model). ``retrain(client, start, round)`` must
    rerun client j's honest local training from the given start; it is only
    invoked here, so normal runs never pay for it.
    """
    if i not in memory or j not in memory:
        raise DiagnosticUnavailableError(f"clients {i} and {j} must both be "
                                         "in server memory")
    rec_i, rec_j = memory[i], memory[j]
    t, tau = rec_i.origin_round, rec_j.origin_round
    if len(global_history) <= max(t - 1, tau - 1) or min(t, tau) < 1:
        raise DiagnosticUnavailableError(
            f"need global params for rounds {t - 1} and {tau - 1}")

    w_before_t = global_history[t - 1].values
    w_before_tau = global_history[tau - 1].values
    delta_i = rec_i.delta.values
    delta_j_stale = rec_j.delta.values

    delta_j_now = retrain(j, global_history[t - 1], t).values
    local_j_now = w_before_t - delta_j_now
    local_j_then = w_before_tau - delta_j_stale

    return UpdateDistanceBound(
        cross_round_dist=float(np.linalg.norm(delta_i - delta_j_stale, ord=p)),
        same_round_dist=float(np.linalg.norm(delta_i - delta_j_now, ord=p)),
        global_drift=float(np.linalg.norm(w_before_t - w_before_tau, ord=p)),
        local_drift=float(np.linalg.norm(local_j_then - local_j_now, ord=p)),
    )
