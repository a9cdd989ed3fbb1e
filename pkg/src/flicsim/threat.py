"""Attacker behaviours injected between local training and aggregation.

Attackers are ordinary clients whose transmitted update is altered:

* ``minus_grad``: compute the honest update, send its negation.
* ``omniscient``: one attacker who can read the rest of the cohort crafts an
  update that steers the weighted-mean aggregate onto an arbitrary parameter
  vector of its choice, exactly.

The server has no idea: malicious updates enter memory and the similarity
matrix like any other, which is precisely what the clustering defence relies
on.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError
from .models import ParamVector

KIND_MINUS_GRAD = "minus_grad"
KIND_OMNISCIENT = "omniscient"


@dataclass(frozen=True)
class ThreatModel:
    """Fixed attacker set for a whole run, plus the attack they mount.

    ``target`` is the parameter vector an omniscient attacker wants the
    aggregation to land on; unused for minus_grad.
    """

    kind: str
    attacker_ids: frozenset[int]
    target: ParamVector | None = None

    def __post_init__(self):
        if self.kind not in (KIND_MINUS_GRAD, KIND_OMNISCIENT):
            raise ConfigError(f"unknown threat kind {self.kind!r}")
        if self.kind == KIND_OMNISCIENT and self.target is None:
            raise ConfigError("omniscient threat needs a target vector")


def apply_minus_grad(delta: ParamVector) -> ParamVector:
    return ParamVector(-delta.values, delta.spec_digest)


def craft_omniscient_update(target: ParamVector,
                            others: Sequence[tuple[ParamVector, int]],
                            own_weight: int,
                            w_prev: ParamVector) -> ParamVector:
    """The update that makes weighted-mean aggregation return ``target``.

    With cohort weights lambda_i = n_i / sum(n), the aggregate applies
    sum(lambda_i * delta_i). Choosing
    delta_k = (w_prev - target) / lambda_k - sum_{i != k} (lambda_i / lambda_k) delta_i
    cancels every other contribution and lands the new global parameters on
    ``target`` up to floating-point rounding.
    """
    if own_weight <= 0:
        raise ConfigError("attacker weight must be positive")
    total = own_weight + sum(n for _, n in others)
    lam_own = own_weight / total
    wanted_step = w_prev.values - target.values
    crafted = wanted_step / lam_own
    for delta, n_k in others:
        crafted = crafted - (n_k / total) / lam_own * delta.values
    return ParamVector(crafted, w_prev.spec_digest)


def intercept(threat: ThreatModel | None, client_id: int,
              honest: ParamVector) -> ParamVector:
    """Per-client replacement; omniscient is deferred to the cohort step."""
    if threat is None or client_id not in threat.attacker_ids:
        return honest
    if threat.kind == KIND_MINUS_GRAD:
        return apply_minus_grad(honest)
    return honest


def finalize_cohort(threat: ThreatModel | None,
                    cohort: list[tuple[int, ParamVector, int]],
                    w_prev: ParamVector) -> list[tuple[int, ParamVector, int]]:
    """Cohort-level pass: the lowest-id sampled omniscient attacker executes.

    Exactly one attacker crafts per round; any other sampled attackers send
    their honest updates, which the executor accounts for like everyone
    else's.
    """
    if threat is None or threat.kind != KIND_OMNISCIENT:
        return cohort
    sampled_attackers = [cid for cid, _, _ in cohort if cid in threat.attacker_ids]
    if not sampled_attackers:
        return cohort
    executor = min(sampled_attackers)
    others = [(delta, n_k) for cid, delta, n_k in cohort if cid != executor]
    own_weight = next(n_k for cid, _, n_k in cohort if cid == executor)
    crafted = craft_omniscient_update(threat.target, others, own_weight, w_prev)
    return [(cid, crafted if cid == executor else delta, n_k)
            for cid, delta, n_k in cohort]
