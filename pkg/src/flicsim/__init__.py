"""Desk-scale simulator for federated learning with incremental
similarity-based client clustering."""

__version__ = "0.1.0"

from .clustering import (
    ClusterPartition,
    WeightedGraph,
    assign_unsampled,
    build_graph,
    cluster_clients,
    louvain,
    modularity,
    purity,
)
from .config import ExperimentConfig, load_config
from .data import ClientDataset, ScenarioSpec, build_scenario
from .errors import (
    CapacityError,
    ConfigError,
    CoverageError,
    DiagnosticUnavailableError,
    FormatError,
    NumericalError,
    ShapeError,
)
from .federation import (
    RoundReport,
    ServerState,
    UpdateRecord,
    run_cluster_phase,
    run_round,
)
from .harness import (
    ExperimentResult,
    collect_distance_bounds,
    evaluate_clients,
    run_experiment,
    run_repeated,
    summarize,
)
from .models import (
    ModelSpec,
    ParamVector,
    client_update,
    evaluate_accuracy,
    init_params,
)
from .similarity import (
    SimilarityMatrix,
    UpdateDistanceBound,
    cosine_similarity,
    ingest_round,
    update_distance_bound,
)
from .threat import ThreatModel, craft_omniscient_update

__all__ = [
    "CapacityError", "ClientDataset", "ClusterPartition", "ConfigError",
    "CoverageError", "DiagnosticUnavailableError", "ExperimentConfig",
    "ExperimentResult", "FormatError", "ModelSpec", "NumericalError",
    "ParamVector", "RoundReport", "ScenarioSpec", "ServerState",
    "ShapeError", "SimilarityMatrix", "ThreatModel", "UpdateDistanceBound",
    "UpdateRecord", "WeightedGraph", "assign_unsampled", "build_graph",
    "build_scenario", "client_update", "cluster_clients",
    "collect_distance_bounds", "cosine_similarity",
    "craft_omniscient_update", "evaluate_accuracy", "evaluate_clients",
    "ingest_round", "init_params", "load_config", "louvain", "modularity",
    "purity", "run_cluster_phase", "run_experiment", "run_repeated",
    "run_round", "summarize", "update_distance_bound",
]
