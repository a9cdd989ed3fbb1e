"""Experiment configuration: INI parsing with strict key checking.

A config file has flat sections [scenario], [model], [federation],
[clustering], [threat], [output]. Unknown sections or keys are errors so a
typo cannot silently fall back to a default. Every reported problem names
the offending key as ``section.key``.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field

from .data import (
    KIND_REGRESSION_TOY,
    SCENARIO_KINDS,
    ScenarioSpec,
)
from .errors import ConfigError, ShapeError
from .models import KIND_CLASSIFIER, KIND_REGRESSION, ModelSpec
from .threat import KIND_MINUS_GRAD, KIND_OMNISCIENT

CLUSTERING_FLIC = "flic"
CLUSTERING_NONE = "none"
THREAT_NONE = "none"
ASSIGN_POST_PHASE2 = "post_phase2"
ASSIGN_AT_CLUSTERING = "at_clustering"

_REQUIRED = object()

_SCHEMA: dict[str, dict[str, tuple]] = {
    "scenario": {
        "kind": (str, _REQUIRED),
        "num_clients": (int, _REQUIRED),
        "num_groups": (int, 1),
        "train_per_client": (int, _REQUIRED),
        "test_per_client": (int, _REQUIRED),
        "num_classes": (int, 10),
        "feature_dim": (int, 32),
        "image_side": (int, 8),
        "class_sep": (float, 4.0),
        "pair_sep": (float, 2.0),
        "sample_std": (float, 0.6),
        "rotation_collision": (float, 0.8),
        "nonneg_features": (bool, False),
        "slopes": ("floats", ()),
        "reg_noise_std": (float, 0.0),
        "images": (str, ""),
        "labels": (str, ""),
    },
    "model": {
        "kind": (str, _REQUIRED),
        "hidden_dims": ("ints", ()),
    },
    "federation": {
        "participation": (float, _REQUIRED),
        "epochs": (int, 5),
        "batch_size": (int, 10),
        "learning_rate": (float, 0.01),
        "rounds": (int, _REQUIRED),
        "cluster_rounds": (int, 0),
        "aggregation": (str, "weighted_mean"),
    },
    "clustering": {
        "method": (str, CLUSTERING_FLIC),
        "diagnostic_per_round": (bool, False),
        "snapshot_rounds": ("ints", None),
        "assign_unsampled": (str, ASSIGN_POST_PHASE2),
    },
    "threat": {
        "kind": (str, THREAT_NONE),
        "num_attackers": (int, 0),
        "attacker_ids": ("ints", None),
        "target": (str, "zeros"),
    },
    "output": {
        "dir": (str, "out"),
    },
}

_BOOL_WORDS = {"true": True, "yes": True, "on": True, "1": True,
               "false": False, "no": False, "off": False, "0": False}


def _convert(kind, raw: str, path: str):
    raw = raw.strip()
    try:
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is bool:
            if raw.lower() not in _BOOL_WORDS:
                raise ValueError(raw)
            return _BOOL_WORDS[raw.lower()]
        if kind == "ints":
            return tuple(int(part) for part in raw.split(",") if part.strip())
        if kind == "floats":
            return tuple(float(part) for part in raw.split(",") if part.strip())
        return raw
    except ValueError:
        label = kind if isinstance(kind, str) else kind.__name__
        raise ConfigError(f"{path}: expected {label}, got {raw!r}") from None


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a run needs; the run seed is supplied separately so one
    config can drive a whole multi-seed sweep."""

    scenario: ScenarioSpec               # seed field is a placeholder (0)
    model: ModelSpec
    participation: float
    epochs: int
    batch_size: int
    learning_rate: float
    rounds: int                          # phase-1 federation rounds
    cluster_rounds: int                  # per-cluster rounds after the split
    aggregation: str
    clustering: str
    diagnostic_per_round: bool
    snapshot_rounds: tuple[int, ...]
    assign_unsampled: str
    threat_kind: str
    attacker_ids: tuple[int, ...]
    threat_target: str
    out_dir: str
    raw_images: str = ""
    raw_labels: str = ""
    sections: dict = field(default_factory=dict, compare=False)

    def is_attack(self) -> bool:
        return self.threat_kind != THREAT_NONE and bool(self.attacker_ids)


def _parse_sections(path: str) -> dict[str, dict[str, object]]:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        read = parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config file: {exc}") from exc
    if not read:
        raise ConfigError(f"config file not found: {path}")

    values: dict[str, dict[str, object]] = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        values[section] = {}
        for key in parser[section]:
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {section}.{key}")
            kind, _ = _SCHEMA[section][key]
            values[section][key] = _convert(kind, parser[section][key],
                                            f"{section}.{key}")
    for section, keys in _SCHEMA.items():
        values.setdefault(section, {})
        for key, (kind, default) in keys.items():
            if key not in values[section]:
                if default is _REQUIRED:
                    raise ConfigError(f"missing required key {section}.{key}")
                values[section][key] = default
    return values


def load_config(path: str) -> ExperimentConfig:
    """Parse and validate a config file; all constraint checks happen here."""
    v = _parse_sections(path)
    scn, mdl = v["scenario"], v["model"]
    fed, clu = v["federation"], v["clustering"]
    thr, out = v["threat"], v["output"]

    if scn["kind"] not in SCENARIO_KINDS:
        raise ConfigError(f"scenario.kind: unknown kind {scn['kind']!r}, "
                          f"expected one of {', '.join(SCENARIO_KINDS)}")
    try:
        scenario = ScenarioSpec(
            kind=scn["kind"], num_clients=scn["num_clients"],
            num_groups=scn["num_groups"],
            train_per_client=scn["train_per_client"],
            test_per_client=scn["test_per_client"], seed=0,
            num_classes=scn["num_classes"], feature_dim=scn["feature_dim"],
            image_side=scn["image_side"], class_sep=scn["class_sep"],
            pair_sep=scn["pair_sep"], sample_std=scn["sample_std"],
            rotation_collision=scn["rotation_collision"],
            nonneg_features=scn["nonneg_features"],
            slopes=scn["slopes"], reg_noise_std=scn["reg_noise_std"])
    except ShapeError as exc:
        raise ConfigError(f"scenario: {exc}") from exc

    for key in ("images", "labels"):
        if scn[key] and not os.path.exists(scn[key]):
            raise ConfigError(f"scenario.{key}: file not found: {scn[key]}")
    if bool(scn["images"]) != bool(scn["labels"]):
        raise ConfigError("scenario.images and scenario.labels must be "
                          "given together")

    if mdl["kind"] not in (KIND_REGRESSION, KIND_CLASSIFIER):
        raise ConfigError(f"model.kind: unknown kind {mdl['kind']!r}")
    if (mdl["kind"] == KIND_REGRESSION) != (scenario.kind == KIND_REGRESSION_TOY):
        raise ConfigError("model.kind: the 1-D regression model pairs only "
                          "with the regression_toy scenario")
    try:
        if mdl["kind"] == KIND_REGRESSION:
            model = ModelSpec(KIND_REGRESSION)
        else:
            model = ModelSpec(KIND_CLASSIFIER,
                              input_dim=scenario.input_dim(),
                              hidden_dims=tuple(mdl["hidden_dims"]),
                              num_classes=scenario.num_classes)
    except ShapeError as exc:
        raise ConfigError(f"model: {exc}") from exc

    if not 0.0 < fed["participation"] <= 1.0:
        raise ConfigError(f"federation.participation: must be in (0, 1], "
                          f"got {fed['participation']}")
    if fed["rounds"] < 1:
        raise ConfigError("federation.rounds: must be >= 1")
    if fed["cluster_rounds"] < 0:
        raise ConfigError("federation.cluster_rounds: must be >= 0")
    if fed["epochs"] < 1 or fed["batch_size"] < 1:
        raise ConfigError("federation.epochs and federation.batch_size "
                          "must be >= 1")
    if fed["learning_rate"] <= 0:
        raise ConfigError("federation.learning_rate: must be positive")
    if fed["aggregation"] not in ("weighted_mean", "coordinate_median"):
        raise ConfigError(f"federation.aggregation: unknown rule "
                          f"{fed['aggregation']!r}")

    if clu["method"] not in (CLUSTERING_FLIC, CLUSTERING_NONE):
        raise ConfigError(f"clustering.method: must be {CLUSTERING_FLIC!r} "
                          f"or {CLUSTERING_NONE!r}, got {clu['method']!r}")
    if clu["assign_unsampled"] not in (ASSIGN_POST_PHASE2, ASSIGN_AT_CLUSTERING):
        raise ConfigError(f"clustering.assign_unsampled: must be "
                          f"{ASSIGN_POST_PHASE2!r} or {ASSIGN_AT_CLUSTERING!r}")
    snapshots = clu["snapshot_rounds"]
    if snapshots is None:
        snapshots = (0, fed["rounds"] // 2, fed["rounds"])
    bad = [s for s in snapshots if not 0 <= s <= fed["rounds"]]
    if bad:
        raise ConfigError(f"clustering.snapshot_rounds: {bad[0]} outside "
                          f"[0, rounds]")

    if thr["kind"] not in (THREAT_NONE, KIND_MINUS_GRAD, KIND_OMNISCIENT):
        raise ConfigError(f"threat.kind: unknown kind {thr['kind']!r}")
    if thr["attacker_ids"] is not None and thr["num_attackers"]:
        raise ConfigError("threat.num_attackers and threat.attacker_ids "
                          "are mutually exclusive")
    if thr["kind"] == THREAT_NONE:
        attackers: tuple[int, ...] = ()
        if thr["num_attackers"] or thr["attacker_ids"]:
            raise ConfigError("threat.kind is 'none' but attackers are listed")
    elif thr["attacker_ids"] is not None:
        attackers = tuple(sorted(set(thr["attacker_ids"])))
    else:
        attackers = tuple(range(thr["num_attackers"]))
    if any(not 0 <= a < scenario.num_clients for a in attackers):
        raise ConfigError("threat: attacker ids must lie in [0, num_clients)")
    if thr["kind"] != THREAT_NONE and not attackers:
        raise ConfigError(f"threat.kind is {thr['kind']!r} but no attackers "
                          "are configured")
    if (thr["kind"] == KIND_OMNISCIENT and thr["target"] != "zeros"
            and not os.path.exists(thr["target"])):
        raise ConfigError(f"threat.target: file not found: {thr['target']}")

    return ExperimentConfig(
        scenario=scenario, model=model,
        participation=fed["participation"], epochs=fed["epochs"],
        batch_size=fed["batch_size"], learning_rate=fed["learning_rate"],
        rounds=fed["rounds"], cluster_rounds=fed["cluster_rounds"],
        aggregation=fed["aggregation"], clustering=clu["method"],
        diagnostic_per_round=clu["diagnostic_per_round"],
        snapshot_rounds=tuple(snapshots),
        assign_unsampled=clu["assign_unsampled"],
        threat_kind=thr["kind"], attacker_ids=attackers,
        threat_target=thr["target"], out_dir=out["dir"],
        raw_images=scn["images"], raw_labels=scn["labels"],
        sections=v)
