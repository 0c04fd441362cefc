"""Graph-filtered self-representation feature selection.

Smooths data through a heat-kernel graph filter, jointly learns a
row-stochastic self-representation matrix and an orthonormal feature-weight
matrix by alternating minimization with an ADMM inner solver, ranks
features by weight-row norms and evaluates selections with a k-means
clustering harness.
"""

from .admm import ZSubproblem, project_simplex_row, project_simplex_rows, solve_z
from .errors import DatasetParseError, GfselError, InvalidInputError, NumericalFailureError
from .evaluation import (
    ClusteringMetrics,
    LabelVector,
    SelectionEvaluation,
    SweepReport,
    acc,
    evaluate_selection,
    kmeans,
    nmi,
    purity,
    sweep,
)
from .graph_filter import (
    HeatKernelFilter,
    SimilarityGraph,
    build_knn_graph,
    heat_kernel_filter,
    median_bandwidth,
    normalized_laplacian,
    smooth,
)
from .solver import (
    FeatureRanking,
    FitResult,
    Hyperparameters,
    fit,
    objective,
    rank_features,
    reweight_d,
    reweight_q,
    update_w,
)

__all__ = [
    "ClusteringMetrics",
    "DatasetParseError",
    "FeatureRanking",
    "FitResult",
    "GfselError",
    "HeatKernelFilter",
    "Hyperparameters",
    "InvalidInputError",
    "LabelVector",
    "NumericalFailureError",
    "SelectionEvaluation",
    "SimilarityGraph",
    "SweepReport",
    "ZSubproblem",
    "acc",
    "build_knn_graph",
    "evaluate_selection",
    "fit",
    "heat_kernel_filter",
    "kmeans",
    "median_bandwidth",
    "nmi",
    "normalized_laplacian",
    "objective",
    "project_simplex_row",
    "project_simplex_rows",
    "purity",
    "rank_features",
    "reweight_d",
    "reweight_q",
    "smooth",
    "solve_z",
    "sweep",
    "update_w",
]
