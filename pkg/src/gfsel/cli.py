"""Command-line front end: CSV ingestion, pipeline commands, JSON/CSV reports.

Three subcommands share one ingestion path:

* ``select`` fits the model on one (alpha, lam) setting and reports the
  feature ranking;
* ``sweep`` grids (alpha, lam), evaluates selections against labels and
  emits both a JSON report and a flat CSV table for plotting;
* ``filter`` writes the smoothed data matrix with graph diagnostics.

Exit codes: 0 success, 2 configuration or parse error, 3 numerical failure.
The environment variable ``GFSEL_SEED`` overrides the ``--seed`` flag.
"""

import argparse
import datetime
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DatasetParseError, GfselError, InvalidInputError, NumericalFailureError
from .evaluation import LabelVector, sweep
from .graph_filter import build_knn_graph, heat_kernel_filter, median_bandwidth, normalized_laplacian, smooth
from .solver import Hyperparameters, fit, rank_features

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

SEED_ENV_VAR = "GFSEL_SEED"


@dataclass(frozen=True)
class DataMatrix:
    """Validated n-by-d sample matrix produced by ingestion."""

    values: np.ndarray

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]


def _try_float(cell: str):
    try:
        return float(cell)
    except ValueError:
        return None


def _split_rows(text: str):
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if line.strip() == "":
            continue
        rows.append((lineno, [cell.strip() for cell in line.split(",")]))
    return rows


def load_dataset(path, labels_path=None, label_column=None):
    """Parse a CSV dataset, optionally extracting labels.

    The file is comma-separated with '.' decimals, one sample per row; a
    header is detected when the first row has a non-numeric cell in a
    feature position. Labels come either from ``labels_path`` (a separate
    single-column file) or from ``label_column`` ("last" or a header name),
    in which case the column is removed from the features. Label values
    are re-encoded to 0..K-1 in first-appearance order.

    Returns ``(DataMatrix, LabelVector or None)``.
    """
    if labels_path is not None and label_column is not None:
        raise DatasetParseError("give either a label file or a label column, not both")
    path = Path(path)
    if not path.exists():
        raise DatasetParseError(f"input file not found: {path}")
    rows = _split_rows(path.read_text(encoding="utf-8"))
    if not rows:
        raise DatasetParseError(f"{path}: file contains no data")

    width = len(rows[0][1])
    for lineno, cells in rows:
        if len(cells) != width:
            raise DatasetParseError(
                f"{path}: row at line {lineno}: expected {width} columns, found {len(cells)}"
            )

    named_label = label_column is not None and label_column != "last"
    if named_label:
        header = rows[0][1]
        if label_column not in header:
            raise DatasetParseError(
                f"{path}: label column {label_column!r} not found in header {header}"
            )
        label_idx = header.index(label_column)
        data_rows = rows[1:]
    else:
        label_idx = width - 1 if label_column == "last" else None
        feature_positions = [j for j in range(width) if j != label_idx]
        if not feature_positions:
            raise DatasetParseError(f"{path}: no feature columns left after removing labels")
        first_cells = rows[0][1]
        has_header = any(_try_float(first_cells[j]) is None for j in feature_positions)
        data_rows = rows[1:] if has_header else rows

    if label_idx is None:
        feature_positions = list(range(width))
    else:
        feature_positions = [j for j in range(width) if j != label_idx]
    if not feature_positions:
        raise DatasetParseError(f"{path}: no feature columns left after removing labels")
    if len(data_rows) < 2:
        raise DatasetParseError(f"{path}: need at least two data rows, found {len(data_rows)}")

    values = np.empty((len(data_rows), len(feature_positions)))
    for i, (lineno, cells) in enumerate(data_rows):
        for out_j, j in enumerate(feature_positions):
            value = _try_float(cells[j])
            if value is None:
                raise DatasetParseError(
                    f"{path}: line {lineno}, column {j + 1}: {cells[j]!r} is not numeric"
                )
            if not np.isfinite(value):
                raise DatasetParseError(
                    f"{path}: line {lineno}, column {j + 1}: non-finite value {cells[j]!r}"
                )
            values[i, out_j] = value

    raw_labels = None
    if label_idx is not None:
        raw_labels = [cells[label_idx] for _, cells in data_rows]
    elif labels_path is not None:
        labels_file = Path(labels_path)
        if not labels_file.exists():
            raise DatasetParseError(f"label file not found: {labels_file}")
        label_rows = _split_rows(labels_file.read_text(encoding="utf-8"))
        for lineno, cells in label_rows:
            if len(cells) != 1:
                raise DatasetParseError(
                    f"{labels_file}: line {lineno}: label file must have exactly one column"
                )
        raw_labels = [cells[0] for _, cells in label_rows]
        if len(raw_labels) != len(data_rows):
            raise DatasetParseError(
                f"{labels_file}: {len(raw_labels)} labels for {len(data_rows)} samples"
            )

    labels = None
    if raw_labels is not None:
        encoding: dict = {}
        encoded = np.empty(len(raw_labels), dtype=np.int64)
        for i, raw in enumerate(raw_labels):
            if raw not in encoding:
                encoding[raw] = len(encoding)
            encoded[i] = encoding[raw]
        labels = LabelVector(labels=encoded, num_classes=len(encoding))

    return DataMatrix(values=values), labels


def parse_grid(spec: str):
    """Parse the geometric grid mini-language ``lo:FACTORx:hi``."""
    parts = spec.split(":")
    if len(parts) != 3 or not parts[1].endswith("x"):
        raise InvalidInputError(f"grid spec must look like 'lo:FACTORx:hi', got {spec!r}")
    try:
        lo = float(parts[0])
        factor = float(parts[1][:-1])
        hi = float(parts[2])
    except ValueError as exc:
        raise InvalidInputError(f"could not parse grid spec {spec!r}: {exc}") from None
    if lo <= 0 or hi < lo or factor <= 1:
        raise InvalidInputError(f"grid spec {spec!r} needs 0 < lo <= hi and factor > 1")
    count = int(round(np.log(hi / lo) / np.log(factor)))
    values = [lo * factor**i for i in range(count + 1)]
    if values and values[-1] > hi * (1 + 1e-9):
        values.pop()
    return values


def parse_feature_counts(spec: str):
    """Parse the inclusive feature-count mini-language ``start:step:stop``."""
    parts = spec.split(":")
    if len(parts) != 3:
        raise InvalidInputError(f"feature spec must look like 'start:step:stop', got {spec!r}")
    try:
        start, step, stop = (int(p) for p in parts)
    except ValueError as exc:
        raise InvalidInputError(f"could not parse feature spec {spec!r}: {exc}") from None
    if start < 1 or step < 1 or stop < start:
        raise InvalidInputError(f"feature spec {spec!r} needs 1 <= start <= stop and step >= 1")
    return list(range(start, stop + 1, step))


def _json_ready(obj):
    if isinstance(obj, dict):
        return {str(key): _json_ready(value) for key, value in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_ready(item) for item in obj]
    if isinstance(obj, np.ndarray):
        return [_json_ready(item) for item in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    return obj


def _write_report(path, payload) -> None:
    Path(path).write_text(json.dumps(_json_ready(payload), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_matrix_csv(path, matrix) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for row in np.asarray(matrix):
            handle.write(",".join(f"{value:.17g}" for value in row) + "\n")


def _sibling_csv(output_path) -> Path:
    return Path(output_path).with_suffix(".csv")


def _timestamp() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def _resolve_clusters(args, labels) -> int:
    if getattr(args, "clusters", None) is not None:
        return args.clusters
    if labels is not None:
        return labels.num_classes
    raise InvalidInputError("--clusters is required when the dataset has no labels")


def _base_config(args, seed: int) -> dict:
    config = {
        "command": args.command,
        "input": str(args.input),
        "output": str(args.output),
        "k": args.k,
        "eta": args.eta,
        "seed": seed,
    }
    for key in ("labels", "label_column", "alpha", "lambda", "clusters", "top",
                "features", "grid", "tol", "max_iters", "workers"):
        attr = "lam" if key == "lambda" else key
        if hasattr(args, attr):
            value = getattr(args, attr)
            config[key] = str(value) if isinstance(value, Path) else value
    return config


def cmd_select(args, seed: int) -> int:
    data, labels = load_dataset(args.input, labels_path=args.labels, label_column=args.label_column)
    clusters = _resolve_clusters(args, labels)
    top = args.top if args.top is not None else data.d
    if not 1 <= top <= data.d:
        raise InvalidInputError(f"--top {top} outside [1, {data.d}]")
    params = Hyperparameters(
        clusters=clusters,
        alpha=args.alpha,
        lam=args.lam,
        k=args.k,
        eta=args.eta,
        max_outer_iters=args.max_iters,
        outer_tol=args.tol,
        seed=seed,
    )
    result = fit(data.values, params)
    ranking = rank_features(result.W)
    config = _base_config(args, seed)
    config.update({"clusters": clusters, "top": top})
    payload = {
        "command": "select",
        "config": config,
        "timestamp": _timestamp(),
        "selected_features": ranking.order[:top],
        "ranking": ranking.order,
        "scores": ranking.scores,
        "objective_history": result.objective_history,
        "iterations": result.iterations,
        "converged": result.converged,
    }
    _write_report(args.output, payload)
    return EXIT_OK


def cmd_sweep(args, seed: int) -> int:
    data, labels = load_dataset(args.input, labels_path=args.labels, label_column=args.label_column)
    if labels is None:
        raise InvalidInputError(
            "sweep requires ground-truth labels; run the select command for unlabeled data"
        )
    clusters = _resolve_clusters(args, labels)
    grid = parse_grid(args.grid)
    feature_counts = parse_feature_counts(args.features)
    if max(feature_counts) > data.d:
        raise InvalidInputError(
            f"largest feature count {max(feature_counts)} exceeds feature dimension {data.d}"
        )
    params = Hyperparameters(
        clusters=clusters,
        k=args.k,
        eta=args.eta,
        max_outer_iters=args.max_iters,
        outer_tol=args.tol,
        seed=seed,
    )
    report = sweep(
        data.values,
        labels.labels,
        grid,
        grid,
        feature_counts,
        params,
        runs=20,
        workers=args.workers,
    )

    table_path = _sibling_csv(args.output)
    with open(table_path, "w", encoding="utf-8") as handle:
        handle.write("alpha,lambda,m,acc,nmi,purity\n")
        for cell in report.cells:
            if cell.error is not None:
                continue
            for m in report.feature_counts:
                evaluation = cell.per_count[m]
                handle.write(
                    f"{cell.alpha:.17g},{cell.lam:.17g},{m},"
                    f"{evaluation.mean.acc:.17g},{evaluation.mean.nmi:.17g},{evaluation.mean.purity:.17g}\n"
                )

    cells_payload = []
    for cell in report.cells:
        entry = {
            "alpha": cell.alpha,
            "lambda": cell.lam,
            "seconds": cell.seconds,
        }
        if cell.error is not None:
            entry["error"] = cell.error
        else:
            entry.update(
                {
                    "fit_iterations": cell.fit_iterations,
                    "fit_converged": cell.fit_converged,
                    "mean": {"acc": cell.mean.acc, "nmi": cell.mean.nmi, "purity": cell.mean.purity},
                    "per_count": [
                        {
                            "m": m,
                            "acc": cell.per_count[m].mean.acc,
                            "nmi": cell.per_count[m].mean.nmi,
                            "purity": cell.per_count[m].mean.purity,
                            "run_acc": [r.acc for r in cell.per_count[m].runs],
                            "run_nmi": [r.nmi for r in cell.per_count[m].runs],
                            "run_purity": [r.purity for r in cell.per_count[m].runs],
                        }
                        for m in report.feature_counts
                    ],
                }
            )
        cells_payload.append(entry)

    config = _base_config(args, seed)
    config.update({"clusters": clusters})
    payload = {
        "command": "sweep",
        "config": config,
        "timestamp": _timestamp(),
        "grid_alpha": report.grid_alpha,
        "grid_lambda": report.grid_lambda,
        "feature_counts": report.feature_counts,
        "runs_per_cell": report.runs_per_cell,
        "kmeans_seeds": [seed + r for r in range(report.runs_per_cell)],
        "best_cell": None
        if report.best_cell is None
        else {"alpha": report.best_cell[0], "lambda": report.best_cell[1]},
        "cells": cells_payload,
        "seconds": report.seconds,
        "table_path": str(table_path),
    }
    _write_report(args.output, payload)
    return EXIT_OK


def cmd_filter(args, seed: int) -> int:
    data, _ = load_dataset(args.input, labels_path=args.labels, label_column=args.label_column)
    delta = median_bandwidth(data.values)
    graph = build_knn_graph(data.values, args.k, delta)
    laplacian, _ = normalized_laplacian(graph)
    filt = heat_kernel_filter(laplacian, args.eta)
    smoothed = smooth(filt, data.values)

    matrix_path = _sibling_csv(args.output)
    _write_matrix_csv(matrix_path, smoothed)
    payload = {
        "command": "filter",
        "config": _base_config(args, seed),
        "timestamp": _timestamp(),
        "diagnostics": {
            "n": data.n,
            "d": data.d,
            "bandwidth": delta,
            "eta": filt.eta,
            "laplacian_min_eigenvalue": float(filt.eigenvalues.min()),
            "laplacian_max_eigenvalue": float(filt.eigenvalues.max()),
        },
        "matrix_path": str(matrix_path),
    }
    _write_report(args.output, payload)
    return EXIT_OK


def _add_io_arguments(parser, labels: bool = True) -> None:
    parser.add_argument("--input", required=True, type=Path, help="input CSV file")
    parser.add_argument("--output", required=True, type=Path, help="JSON report path")
    if labels:
        group = parser.add_mutually_exclusive_group()
        group.add_argument("--labels", type=Path, default=None, help="separate single-column label file")
        group.add_argument(
            "--label-column",
            default=None,
            help="'last' or the header name of the label column inside the input file",
        )
    parser.add_argument("--k", type=int, default=5, help="neighbour count of the kNN graph")
    parser.add_argument("--eta", type=float, default=1.0, help="heat-kernel temperature")
    parser.add_argument("--seed", type=int, default=42, help="random seed")


def _add_fit_arguments(parser) -> None:
    parser.add_argument("--clusters", type=int, default=None, help="cluster count (defaults to label classes)")
    parser.add_argument("--tol", type=float, default=1e-4, help="relative objective tolerance")
    parser.add_argument("--max-iters", type=int, default=50, help="outer iteration cap")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gfsel",
        description="Graph-filtered self-representation feature selection",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    select = sub.add_parser("select", help="fit once and rank features")
    _add_io_arguments(select)
    _add_fit_arguments(select)
    select.add_argument("--alpha", type=float, default=1.0, help="graph-tether weight")
    select.add_argument("--lambda", dest="lam", type=float, default=1.0, help="row-sparsity weight")
    select.add_argument("--top", type=int, default=None, help="number of features to select (default: all)")

    sweep_parser = sub.add_parser("sweep", help="grid-search alpha/lambda and evaluate with k-means")
    _add_io_arguments(sweep_parser)
    _add_fit_arguments(sweep_parser)
    sweep_parser.add_argument("--grid", default="1e-3:10x:1e3", help="geometric grid spec lo:FACTORx:hi")
    sweep_parser.add_argument("--features", default="10:10:100", help="feature-count spec start:step:stop")
    sweep_parser.add_argument(
        "--workers", type=int, default=os.cpu_count() or 1, help="parallel grid-cell workers"
    )

    filter_parser = sub.add_parser("filter", help="write the smoothed matrix and graph diagnostics")
    _add_io_arguments(filter_parser)

    return parser


def _write_error_record(args, exc, seed) -> None:
    output = getattr(args, "output", None)
    if output is None:
        return
    payload = {
        "command": getattr(args, "command", None),
        "config": _base_config(args, seed),
        "timestamp": _timestamp(),
        "error": {"type": type(exc).__name__, "message": str(exc)},
    }
    try:
        _write_report(output, payload)
    except OSError:
        pass


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else 0

    seed = args.seed
    env_seed = os.environ.get(SEED_ENV_VAR)
    if env_seed is not None:
        try:
            seed = int(env_seed)
        except ValueError:
            print(f"gfsel: {SEED_ENV_VAR}={env_seed!r} is not an integer", file=sys.stderr)
            return EXIT_CONFIG

    commands = {"select": cmd_select, "sweep": cmd_sweep, "filter": cmd_filter}
    try:
        return commands[args.command](args, seed)
    except NumericalFailureError as exc:
        print(f"gfsel: numerical failure: {exc}", file=sys.stderr)
        _write_error_record(args, exc, seed)
        return EXIT_NUMERIC
    except (DatasetParseError, InvalidInputError, GfselError) as exc:
        print(f"gfsel: {exc}", file=sys.stderr)
        _write_error_record(args, exc, seed)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
