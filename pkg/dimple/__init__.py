"""Multiplex network simulation, tensor estimation and between-layer clustering."""
from __future__ import annotations

from .errors import (
    ConfigError,
    DimensionError,
    DimpleError,
    FormatError,
    IndeterminateThresholdError,
    InfeasibleModelError,
    NotOrthonormalError,
    NumericalError,
    RankDeficiencyError,
    RegularizationError,
    SingularCovarianceError,
)
from .hooi import FactorPair, HooiConfig, default_deltas, estimate_factors, hooi_iterate, init_factors, true_factors
from .layer_cluster import ClusterConfig, ClusteringResult, ThresholdMode, cluster_baseline, cluster_tensor, kmeans
from .metrics import ErrorReport, is_perfect, misclassification_rate, subspace_errors
from .netgen import (
    DirichletFirstK,
    GroundTruth,
    ModelConfig,
    MultinomialFirstK,
    TruncatedNormal,
    build_ground_truth,
    sample_adjacency,
)

__all__ = [
    "ClusterConfig",
    "ClusteringResult",
    "ConfigError",
    "DimensionError",
    "DimpleError",
    "DirichletFirstK",
    "ErrorReport",
    "FactorPair",
    "FormatError",
    "GroundTruth",
    "HooiConfig",
    "IndeterminateThresholdError",
    "InfeasibleModelError",
    "ModelConfig",
    "MultinomialFirstK",
    "NotOrthonormalError",
    "NumericalError",
    "RankDeficiencyError",
    "RegularizationError",
    "SingularCovarianceError",
    "ThresholdMode",
    "TruncatedNormal",
    "build_ground_truth",
    "cluster_baseline",
    "cluster_tensor",
    "default_deltas",
    "estimate_factors",
    "hooi_iterate",
    "init_factors",
    "is_perfect",
    "kmeans",
    "misclassification_rate",
    "sample_adjacency",
    "subspace_errors",
    "true_factors",
]
