"""kNN similarity graphs, normalized Laplacians and heat-kernel smoothing.

The functions here turn a sample matrix into its low-pass representation:
build a Gaussian-weighted k-nearest-neighbour graph, form the symmetric
normalized Laplacian, exponentiate the (negated, scaled) Laplacian into a
smoothing operator and apply that operator to the data columns.

All operations are pure functions of their inputs and safe to call
concurrently on shared read-only arrays.
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .errors import InvalidInputError

# Floor for the Gaussian bandwidth on duplicate-heavy data.
DEGENERATE_BANDWIDTH = 1e-12

# Maximum tolerated asymmetry before a matrix is rejected as non-symmetric.
SYMMETRY_TOL = 1e-8


def _as_sample_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise InvalidInputError(f"expected a 2-D sample matrix, got shape {X.shape}")
    if X.shape[0] < 2:
        raise InvalidInputError("need at least two samples")
    if X.shape[1] < 1:
        raise InvalidInputError("need at least one feature")
    if not np.all(np.isfinite(X)):
        raise InvalidInputError("sample matrix contains NaN or Inf entries")
    return X


def median_bandwidth(X) -> float:
    """Median Euclidean distance over all sample pairs.

    For an even number of pairs the median is the mean of the two central
    values. Returns ``DEGENERATE_BANDWIDTH`` when the median collapses below
    it (duplicate-heavy data), which keeps the Gaussian weights well defined.
    """
    X = _as_sample_matrix(X)
    delta = float(np.median(pdist(X, metric="euclidean")))
    if delta < DEGENERATE_BANDWIDTH:
        return DEGENERATE_BANDWIDTH
    return delta


@dataclass(frozen=True)
class SimilarityGraph:
    """Symmetrized Gaussian kNN affinity matrix.

    ``matrix`` is exactly symmetric with a zero diagonal and entries in
    [0, 1]; ``k`` and ``delta`` record how it was built.
    """

    matrix: np.ndarray
    k: int
    delta: float


def build_knn_graph(X, k: int, delta: float) -> SimilarityGraph:
    """Gaussian kNN graph with union symmetrization.

    Each sample is linked to its ``k`` nearest neighbours (Euclidean metric,
    self excluded, distance ties broken by the smaller sample index) with
    weight exp(-dist^2 / delta^2); the directed graph is then symmetrized by
    the elementwise maximum, which can only add edges.
    """
    X = _as_sample_matrix(X)
    n = X.shape[0]
    if not 1 <= k <= n - 1:
        raise InvalidInputError(f"k must lie in [1, {n - 1}], got {k}")
    if not delta > 0:
        raise InvalidInputError(f"bandwidth must be positive, got {delta}")

    sq_dists = squareform(pdist(X, metric="sqeuclidean"))
    ranked = sq_dists.copy()
    np.fill_diagonal(ranked, np.inf)
    # Stable sort resolves equal distances in favour of the smaller index.
    neighbours = np.argsort(ranked, axis=1, kind="stable")[:, :k]

    S = np.zeros((n, n))
    rows = np.repeat(np.arange(n), k)
    cols = neighbours.ravel()
    S[rows, cols] = np.exp(-sq_dists[rows, cols] / (delta * delta))
    S = np.maximum(S, S.T)
    np.fill_diagonal(S, 0.0)
    return SimilarityGraph(matrix=S, k=k, delta=delta)


def normalized_laplacian(graph):
    """Symmetric normalized Laplacian of a similarity graph.

    Returns ``(L, G)`` where ``G = D^{-1/2} S D^{-1/2}`` is the symmetric
    transition matrix built from the degree diagonal ``D`` and ``L = I - G``.
    ``L`` is exactly symmetric, positive semidefinite, with spectrum in
    [0, 2] up to round-off.

    Raises
    ------
    InvalidInputError
        If the graph has an isolated vertex (zero degree); the message names
        the vertex and suggests raising the neighbour count.
    """
    S = graph.matrix if isinstance(graph, SimilarityGraph) else np.asarray(graph, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise InvalidInputError(f"similarity matrix must be square, got shape {S.shape}")
    if np.max(np.abs(S - S.T), initial=0.0) > SYMMETRY_TOL:
        raise InvalidInputError("similarity matrix must be symmetric")
    if np.min(S, initial=0.0) < 0:
        raise InvalidInputError("similarity matrix must be nonnegative")

    degrees = S.sum(axis=1)
    isolated = np.flatnonzero(degrees <= 0)
    if isolated.size:
        raise InvalidInputError(
            f"vertex {int(isolated[0])} is isolated (zero degree); raise the neighbour count k"
        )
    inv_sqrt = 1.0 / np.sqrt(degrees)
    G = S * inv_sqrt[:, None] * inv_sqrt[None, :]
    G = 0.5 * (G + G.T)  # exact symmetry despite non-associative rounding
    L = np.eye(S.shape[0]) - G
    return L, G


@dataclass(frozen=True)
class HeatKernelFilter:
    """Low-pass graph operator exp(-eta * L) with its spectral factors.

    ``eigenvalues``/``eigenvectors`` are the (unclamped) spectrum and
    orthonormal eigenbasis of the Laplacian; ``operator`` is symmetric
    positive definite with spectral radius at most one.
    """

    laplacian: np.ndarray
    operator: np.ndarray
    eta: float
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def heat_kernel_filter(L, eta: float) -> HeatKernelFilter:
    """Build exp(-eta * L) by dense symmetric eigendecomposition.

    Eigenvalues below zero (round-off) are clamped to zero before
    exponentiation so the operator is certified positive definite, and the
    result is re-symmetrized to kill multiplication round-off.
    """
    L = np.asarray(L, dtype=np.float64)
    if L.ndim != 2 or L.shape[0] != L.shape[1]:
        raise InvalidInputError(f"Laplacian must be square, got shape {L.shape}")
    if eta < 0:
        raise InvalidInputError(f"temperature must be nonnegative, got {eta}")
    if np.max(np.abs(L - L.T), initial=0.0) > SYMMETRY_TOL:
        raise InvalidInputError("Laplacian must be symmetric")

    eigenvalues, eigenvectors = np.linalg.eigh(0.5 * (L + L.T))
    decay = np.exp(-eta * np.clip(eigenvalues, 0.0, None))
    A = (eigenvectors * decay) @ eigenvectors.T
    A = 0.5 * (A + A.T)
    return HeatKernelFilter(
        laplacian=L,
        operator=A,
        eta=float(eta),
        eigenvalues=eigenvalues,
        eigenvectors=eigenvectors,
    )


def smooth(filt: HeatKernelFilter, X) -> np.ndarray:
    """Apply the heat-kernel operator to every data column."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise InvalidInputError(f"expected a 2-D sample matrix, got shape {X.shape}")
    if filt.operator.shape[0] != X.shape[0]:
        raise InvalidInputError(
            f"filter built for {filt.operator.shape[0]} samples, data has {X.shape[0]}"
        )
    return filt.operator @ X
