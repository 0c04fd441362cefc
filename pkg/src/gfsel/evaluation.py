"""Clustering-based evaluation of feature selections.

Runs seeded Lloyd k-means on selected columns and scores the partition
against ground truth with accuracy under optimal label matching,
normalized mutual information and purity, averaged over repeated runs.
``sweep`` drives the full hyperparameter grid of fits and evaluations.
"""

import dataclasses
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import solver
from .errors import GfselError, InvalidInputError

KMEANS_MAX_ITERS = 300


@dataclass(frozen=True)
class LabelVector:
    """Integer labels in [0, num_classes), one per sample."""

    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "labels", labels)
        if labels.ndim != 1:
            raise InvalidInputError("labels must be a 1-D vector")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise InvalidInputError("labels must lie in [0, num_classes)")


@dataclass(frozen=True)
class ClusteringMetrics:
    acc: float
    nmi: float
    purity: float


@dataclass(frozen=True)
class SelectionEvaluation:
    """Averaged metrics of one selection plus the per-run records behind them."""

    mean: ClusteringMetrics
    runs: list[ClusteringMetrics]
    seeds: list[int]


@dataclass(frozen=True)
class SweepCell:
    """One (alpha, lam) grid cell: per-feature-count evaluations, their means
    over counts, the fit diagnostics and the wall-clock, or an error record."""

    alpha: float
    lam: float
    per_count: dict
    mean: ClusteringMetrics | None
    seconds: float
    fit_iterations: int = 0
    fit_converged: bool = False
    error: str | None = None


@dataclass(frozen=True)
class SweepReport:
    cells: list[SweepCell]
    grid_alpha: list[float]
    grid_lambda: list[float]
    feature_counts: list[int]
    runs_per_cell: int
    seed: int
    best_cell: tuple[float, float] | None
    seconds: float


def _as_labels(truth) -> np.ndarray:
    if isinstance(truth, LabelVector):
        return truth.labels
    truth = np.asarray(truth)
    if truth.ndim != 1:
        raise InvalidInputError("labels must be a 1-D vector")
    return truth.astype(np.int64)


def kmeans(X, clusters: int, seed: int) -> np.ndarray:
    """Seeded Lloyd iterations with uniform distinct-row initialization.

    Initial centroids are ``clusters`` distinct rows drawn uniformly at
    random. Empty clusters are repaired by reseeding the centroid at the
    point farthest from its assigned centroid. Stops when assignments
    stabilize or after 300 iterations; bitwise deterministic per seed.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise InvalidInputError(f"expected a 2-D matrix, got shape {X.shape}")
    n = X.shape[0]
    if clusters < 1:
        raise InvalidInputError("cluster count must be at least 1")
    if clusters > n:
        raise InvalidInputError(f"cluster count {clusters} exceeds sample count {n}")

    rng = np.random.default_rng(seed)
    centroids = X[rng.choice(n, size=clusters, replace=False)].copy()
    row_sq = np.sum(X * X, axis=1)

    def assign(cents):
        d2 = row_sq[:, None] - 2.0 * (X @ cents.T) + np.sum(cents * cents, axis=1)[None, :]
        return d2, np.argmin(d2, axis=1)

    labels = None
    for _ in range(KMEANS_MAX_ITERS):
        d2, new_labels = assign(centroids)
        for _repair in range(clusters):
            counts = np.bincount(new_labels, minlength=clusters)
            empty = np.flatnonzero(counts == 0)
            if empty.size == 0:
                break
            own_dist = d2[np.arange(n), new_labels].copy()
            for cluster_id in empty:
                farthest = int(np.argmax(own_dist))
                centroids[cluster_id] = X[farthest]
                own_dist[farthest] = -np.inf
            d2, new_labels = assign(centroids)
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(clusters):
            members = labels == j
            if np.any(members):
                centroids[j] = X[members].mean(axis=0)
    return labels


def _check_pair(pred, truth):
    pred = _as_labels(pred)
    truth = _as_labels(truth)
    if pred.shape != truth.shape:
        raise InvalidInputError(
            f"label vectors must have equal length, got {pred.size} and {truth.size}"
        )
    if pred.size == 0:
        raise InvalidInputError("label vectors must be non-empty")
    return pred, truth


def _contingency(pred, truth) -> np.ndarray:
    _, pred_idx = np.unique(pred, return_inverse=True)
    _, truth_idx = np.unique(truth, return_inverse=True)
    table = np.zeros((pred_idx.max() + 1, truth_idx.max() + 1), dtype=np.int64)
    np.add.at(table, (pred_idx, truth_idx), 1)
    return table


def _first_appearance_encoding(labels) -> np.ndarray:
    _, first_index, inverse = np.unique(labels, return_index=True, return_inverse=True)
    rank = np.argsort(np.argsort(first_index))
    return rank[inverse]


def acc(pred, truth) -> float:
    """Best accuracy over all matchings of predicted to true labels.

    Solved exactly as an optimal assignment on the zero-padded square
    contingency table.
    """
    pred, truth = _check_pair(pred, truth)
    table = _contingency(pred, truth)
    size = max(table.shape)
    padded = np.zeros((size, size), dtype=np.int64)
    padded[: table.shape[0], : table.shape[1]] = table
    rows, cols = linear_sum_assignment(padded, maximize=True)
    return float(padded[rows, cols].sum()) / pred.size


def nmi(pred, truth) -> float:
    """Mutual information normalized by the geometric mean of the entropies.

    Natural logarithms; 0*log(0) terms are dropped. When either partition
    has zero entropy the value is 1 if the partitions coincide up to
    relabeling and 0 otherwise.
    """
    pred, truth = _check_pair(pred, truth)
    table = _contingency(pred, truth).astype(np.float64)
    joint = table / pred.size
    row_marginal = joint.sum(axis=1)
    col_marginal = joint.sum(axis=0)
    pred_entropy = -float(np.sum(row_marginal[row_marginal > 0] * np.log(row_marginal[row_marginal > 0])))
    truth_entropy = -float(np.sum(col_marginal[col_marginal > 0] * np.log(col_marginal[col_marginal > 0])))
    if pred_entropy <= 0 or truth_entropy <= 0:
        same = np.array_equal(
            _first_appearance_encoding(pred), _first_appearance_encoding(truth)
        )
        return 1.0 if same else 0.0
    nonzero = joint > 0
    outer = row_marginal[:, None] * col_marginal[None, :]
    information = float(np.sum(joint[nonzero] * (np.log(joint[nonzero]) - np.log(outer[nonzero]))))
    return float(np.clip(information / np.sqrt(pred_entropy * truth_entropy), 0.0, 1.0))


def purity(pred, truth) -> float:
    """Fraction of samples in the majority true class of their cluster."""
    pred, truth = _check_pair(pred, truth)
    table = _contingency(pred, truth)
    return float(table.max(axis=1).sum()) / pred.size


def _selection_columns(ranking, m: int) -> np.ndarray:
    order = ranking.order if hasattr(ranking, "order") else np.asarray(ranking)
    return np.asarray(order[:m], dtype=np.intp)


def evaluate_selection(X, ranking, m: int, truth, clusters: int, runs: int = 20, seed: int = 0) -> SelectionEvaluation:
    """Cluster the top-m columns ``runs`` times and average the metrics.

    Run r uses seed ``seed + r``; the arithmetic means and the per-run
    records are both returned.
    """
    X = np.asarray(X, dtype=np.float64)
    truth = _as_labels(truth)
    if m < 1 or m > X.shape[1]:
        raise InvalidInputError(f"feature count {m} outside [1, {X.shape[1]}]")
    if runs < 1:
        raise InvalidInputError("runs must be at least 1")
    selected = X[:, _selection_columns(ranking, m)]
    seeds = [seed + r for r in range(runs)]
    records = []
    for run_seed in seeds:
        pred = kmeans(selected, clusters, run_seed)
        records.append(
            ClusteringMetrics(acc=acc(pred, truth), nmi=nmi(pred, truth), purity=purity(pred, truth))
        )
    mean = ClusteringMetrics(
        acc=float(np.mean([r.acc for r in records])),
        nmi=float(np.mean([r.nmi for r in records])),
        purity=float(np.mean([r.purity for r in records])),
    )
    return SelectionEvaluation(mean=mean, runs=records, seeds=seeds)


def _run_cell(X, truth, alpha, lam, feature_counts, params, runs):
    start = time.perf_counter()
    try:
        cell_params = dataclasses.replace(params, alpha=alpha, lam=lam)
        result = solver.fit(X, cell_params)
        ranking = solver.rank_features(result.W)
        per_count = {
            m: evaluate_selection(X, ranking, m, truth, params.clusters, runs=runs, seed=params.seed)
            for m in feature_counts
        }
        mean = ClusteringMetrics(
            acc=float(np.mean([per_count[m].mean.acc for m in feature_counts])),
            nmi=float(np.mean([per_count[m].mean.nmi for m in feature_counts])),
            purity=float(np.mean([per_count[m].mean.purity for m in feature_counts])),
        )
        return SweepCell(
            alpha=alpha,
            lam=lam,
            per_count=per_count,
            mean=mean,
            seconds=time.perf_counter() - start,
            fit_iterations=result.iterations,
            fit_converged=result.converged,
        )
    except (GfselError, np.linalg.LinAlgError, FloatingPointError) as exc:
        return SweepCell(
            alpha=alpha,
            lam=lam,
            per_count={},
            mean=None,
            seconds=time.perf_counter() - start,
            error=f"{type(exc).__name__}: {exc}",
        )


def sweep(X, truth, grid_alpha, grid_lambda, feature_counts, params, runs: int = 20, workers: int = 1) -> SweepReport:
    """Fit and evaluate every (alpha, lam) cell of a hyperparameter grid.

    Each cell fits once, ranks once, and evaluates every feature count in
    ``feature_counts``. A failing cell is recorded with its error message
    rather than dropped. ``best_cell`` is the cell maximizing the mean
    accuracy over feature counts (first in grid order on ties). Cells are
    independent and may be computed by ``workers`` threads; the report
    layout does not depend on completion order.
    """
    X = np.asarray(X, dtype=np.float64)
    truth = _as_labels(truth)
    grid_alpha = [float(a) for a in grid_alpha]
    grid_lambda = [float(l) for l in grid_lambda]
    feature_counts = [int(m) for m in feature_counts]
    if not grid_alpha or not grid_lambda:
        raise InvalidInputError("hyperparameter grids must be non-empty")
    if not feature_counts:
        raise InvalidInputError("feature_counts must be non-empty")
    if max(feature_counts) > X.shape[1]:
        raise InvalidInputError(
            f"largest feature count {max(feature_counts)} exceeds feature dimension {X.shape[1]}"
        )
    if truth.size != X.shape[0]:
        raise InvalidInputError("labels must match the sample count")

    start = time.perf_counter()
    jobs = [(alpha, lam) for alpha in grid_alpha for lam in grid_lambda]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            cells = list(
                pool.map(lambda job: _run_cell(X, truth, job[0], job[1], feature_counts, params, runs), jobs)
            )
    else:
        cells = [_run_cell(X, truth, alpha, lam, feature_counts, params, runs) for alpha, lam in jobs]

    best_cell = None
    best_acc = -np.inf
    for cell in cells:
        if cell.mean is not None and cell.mean.acc > best_acc:
            best_acc = cell.mean.acc
            best_cell = (cell.alpha, cell.lam)

    return SweepReport(
        cells=cells,
        grid_alpha=grid_alpha,
        grid_lambda=grid_lambda,
        feature_counts=feature_counts,
        runs_per_cell=runs,
        seed=params.seed,
        best_cell=best_cell,
        seconds=time.perf_counter() - start,
    )
