"""Alternating minimization for joint self-representation and feature weights.

The objective couples three terms: a row-wise robust reconstruction error
of the projected smoothed data against its own row-stochastic combination,
a quadratic tether between the combination matrix and the heat-kernel
operator, and a row-sparsity penalty on the projection. Each outer
iteration refreshes the projection by a trace eigenproblem, the
combination matrix by the ADMM subsolver, and the two reweighting
diagonals that majorize the row-wise norms.
"""

from dataclasses import dataclass, field

import numpy as np

from . import admm
from .errors import InvalidInputError, NumericalFailureError
from .graph_filter import (
    _as_sample_matrix,
    build_knn_graph,
    heat_kernel_filter,
    median_bandwidth,
    normalized_laplacian,
    smooth,
)

# Floor applied to row norms before inversion in the reweighting diagonals.
ROW_NORM_FLOOR = 1e-8

# Absolute floor for the relative-change denominator of the stopping rule.
CONVERGENCE_FLOOR = 1e-12


@dataclass(frozen=True)
class Hyperparameters:
    """Configuration of one fit.

    ``clusters`` is both the projection width and the expected cluster
    count; ``alpha`` weighs the tether to the graph operator, ``lam`` the
    row-sparsity penalty. ``z_init`` selects the starting combination
    matrix: the simplex-projected graph operator (default) or a seeded
    random draw projected row-wise ("random", kept for ablation).
    """

    clusters: int
    alpha: float = 1.0
    lam: float = 1.0
    k: int = 5
    eta: float = 1.0
    max_outer_iters: int = 50
    outer_tol: float = 1e-4
    seed: int = 42
    max_inner_iters: int = 200
    inner_tol: float = 1e-6
    z_init: str = "filter"

    def __post_init__(self):
        if self.alpha < 0 or self.lam < 0:
            raise InvalidInputError("alpha and lam must be nonnegative")
        if self.clusters < 1:
            raise InvalidInputError("clusters must be at least 1")
        if self.k < 1:
            raise InvalidInputError("k must be at least 1")
        if self.eta < 0:
            raise InvalidInputError("eta must be nonnegative")
        if self.max_outer_iters < 1 or self.max_inner_iters < 1:
            raise InvalidInputError("iteration limits must be at least 1")
        if not self.outer_tol > 0 or not self.inner_tol > 0:
            raise InvalidInputError("tolerances must be positive")
        if self.z_init not in ("filter", "random"):
            raise InvalidInputError(f"unknown z_init mode {self.z_init!r}")


@dataclass(frozen=True)
class IterationStats:
    """Constraint residuals recorded after one outer iteration."""

    orthonormality_error: float
    z_min: float
    z_row_sum_error: float


@dataclass(frozen=True)
class FitResult:
    W: np.ndarray
    Z: np.ndarray
    objective_history: list[float]
    iterations: int
    converged: bool
    constraint_trace: list[IterationStats] = field(repr=False, default_factory=list)


@dataclass(frozen=True)
class FeatureRanking:
    """Per-feature scores (row norms of W) and the descending stable order."""

    scores: np.ndarray
    order: np.ndarray


def l21_norm(M) -> float:
    """Sum of the Euclidean norms of the rows."""
    M = np.asarray(M, dtype=np.float64)
    return float(np.sum(np.sqrt(np.sum(M * M, axis=1))))


def objective(Xbar, W, Z, prior, alpha: float, lam: float) -> float:
    """Full objective: robust reconstruction + tether + row sparsity."""
    Xbar = np.asarray(Xbar, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    Z = np.asarray(Z, dtype=np.float64)
    prior = np.asarray(prior, dtype=np.float64)
    n, d = Xbar.shape
    if W.shape[0] != d:
        raise InvalidInputError(f"W has {W.shape[0]} rows, expected {d}")
    if Z.shape != (n, n) or prior.shape != (n, n):
        raise InvalidInputError("Z and the prior must be n-by-n")
    projected = Xbar @ W
    residual = projected - Z @ projected
    return (
        l21_norm(residual)
        + alpha * float(np.sum((Z - prior) ** 2))
        + lam * l21_norm(W)
    )


def update_w(Xbar, Z, dvec, qvec, lam: float, c: int) -> np.ndarray:
    """Refresh the projection: c bottom eigenvectors of the weighted quadratic.

    Forms the symmetric matrix P + lam * Q with
    P = Xbar^T (I - Z)^T D (I - Z) Xbar and diagonal Q, and returns the
    eigenvectors of its c smallest eigenvalues (ascending), each column
    sign-fixed so its largest-magnitude entry is positive.
    """
    Xbar = np.asarray(Xbar, dtype=np.float64)
    Z = np.asarray(Z, dtype=np.float64)
    dvec = np.asarray(dvec, dtype=np.float64)
    qvec = np.asarray(qvec, dtype=np.float64)
    d = Xbar.shape[1]
    if c > d:
        raise InvalidInputError(f"projection width {c} exceeds feature count {d}")
    if np.any(dvec <= 0) or np.any(qvec <= 0):
        raise InvalidInputError("reweighting diagonals must be strictly positive")

    residual_map = Xbar - Z @ Xbar
    M = residual_map.T @ (dvec[:, None] * residual_map)
    M[np.diag_indices_from(M)] += lam * qvec
    M = 0.5 * (M + M.T)
    _, eigenvectors = np.linalg.eigh(M)
    W = eigenvectors[:, :c].copy()
    lead = np.argmax(np.abs(W), axis=0)
    signs = np.sign(W[lead, np.arange(c)])
    signs[signs == 0] = 1.0
    return W * signs


def reweight_d(Xbar, W, Z) -> np.ndarray:
    """Per-sample diagonal 1 / (2 * max(residual row norm, floor))."""
    Xbar = np.asarray(Xbar, dtype=np.float64)
    projected = Xbar @ np.asarray(W, dtype=np.float64)
    residual = projected - np.asarray(Z, dtype=np.float64) @ projected
    norms = np.linalg.norm(residual, axis=1)
    return 1.0 / (2.0 * np.maximum(norms, ROW_NORM_FLOOR))


def reweight_q(W) -> np.ndarray:
    """Per-feature diagonal 1 / (2 * max(row norm of W, floor))."""
    norms = np.linalg.norm(np.asarray(W, dtype=np.float64), axis=1)
    return 1.0 / (2.0 * np.maximum(norms, ROW_NORM_FLOOR))


def _orthonormal_init(rng: np.random.Generator, d: int, c: int) -> np.ndarray:
    basis, _ = np.linalg.qr(rng.standard_normal((d, c)))
    return basis


def _constraint_stats(W, Z) -> IterationStats:
    gram = W.T @ W
    return IterationStats(
        orthonormality_error=float(np.linalg.norm(gram - np.eye(W.shape[1]))),
        z_min=float(np.min(Z)),
        z_row_sum_error=float(np.max(np.abs(Z.sum(axis=1) - 1.0))),
    )


def fit(X, params: Hyperparameters) -> FitResult:
    """Run the full pipeline on a sample matrix.

    Builds the graph filter (median bandwidth, kNN graph, normalized
    Laplacian, heat kernel), smooths the data, then alternates the
    projection eigenstep, the ADMM combination step and the reweighting
    refresh until the relative objective change drops below
    ``params.outer_tol`` or ``params.max_outer_iters`` is reached. The
    whole run is deterministic for a fixed seed.
    """
    X = _as_sample_matrix(X)
    n, d = X.shape
    c = params.clusters
    if c > min(n, d):
        raise InvalidInputError(f"clusters={c} exceeds min(n, d)={min(n, d)}")
    if params.k > n - 1:
        raise InvalidInputError(f"k={params.k} requires at least {params.k + 1} samples, got {n}")

    delta = median_bandwidth(X)
    graph = build_knn_graph(X, params.k, delta)
    laplacian, _ = normalized_laplacian(graph)
    filt = heat_kernel_filter(laplacian, params.eta)
    Xbar = smooth(filt, X)
    prior = filt.operator

    rng = np.random.default_rng(params.seed)
    W = _orthonormal_init(rng, d, c)
    if params.z_init == "random":
        Z = admm.project_simplex_rows(rng.standard_normal((n, n)))
    else:
        Z = admm.project_simplex_rows(prior)
    dvec = reweight_d(Xbar, W, Z)
    qvec = reweight_q(W)

    history = [objective(Xbar, W, Z, prior, params.alpha, params.lam)]
    trace = [_constraint_stats(W, Z)]
    converged = False
    iterations = 0
    for t in range(1, params.max_outer_iters + 1):
        W = update_w(Xbar, Z, dvec, qvec, params.lam, c)
        prob = admm.ZSubproblem.from_parts(Xbar, W, dvec, params.alpha, prior)
        Z = admm.solve_z(prob, Z, params.max_inner_iters, params.inner_tol)
        dvec = reweight_d(Xbar, W, Z)
        qvec = reweight_q(W)

        value = objective(Xbar, W, Z, prior, params.alpha, params.lam)
        if not np.isfinite(value):
            raise NumericalFailureError(f"objective became non-finite at outer iteration {t}")
        history.append(value)
        trace.append(_constraint_stats(W, Z))
        iterations = t
        relative_change = abs(history[-2] - value) / max(abs(value), CONVERGENCE_FLOOR)
        if relative_change <= params.outer_tol:
            converged = True
            break

    return FitResult(
        W=W,
        Z=Z,
        objective_history=history,
        iterations=iterations,
        converged=converged,
        constraint_trace=trace,
    )


def rank_features(W) -> FeatureRanking:
    """Score features by the row norms of W; order descending, ties by index."""
    W = np.asarray(W, dtype=np.float64)
    if W.ndim != 2:
        raise InvalidInputError(f"expected a 2-D weight matrix, got shape {W.shape}")
    scores = np.linalg.norm(W, axis=1)
    order = np.argsort(-scores, kind="stable")
    return FeatureRanking(scores=scores, order=order)
