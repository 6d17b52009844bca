"""End-to-end pipeline orchestration and the cross-user evaluation protocol.

For every task the max-abs scaler is fit on the source user and applied to
both users, the target stream is split into a first-half validation set and
a second-half test set, hyperparameters are selected by validation accuracy
only, and the test half is touched exactly once with the selected setting.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, replace
from itertools import product
from pathlib import Path

import numpy as np

from .adapt import barycentric_map, barycentric_project, coral_align, transform_samples
from .errors import DimensionMismatchError, InsufficientDataError, TrotError
from .hmm import assign_dataset_states, build_atlas
from .ot_core import (
    OrderGroups,
    TrotHyperparams,
    class_groups_from_labels,
    cost_matrix,
    gcg_solve,
    order_groups,
    pairwise_sq_dists,
    sinkhorn,
)
from .preprocess import FeatureDataset, fit_maxabs, load_features, maxabs_fit_apply

METHODS = ("na", "td", "ot", "otda", "coral", "trot")
MAX_COUPLING_WINDOWS = 500  # window-level baselines subsample beyond this

DEFAULT_ENTROPY_GRID = (0.01, 0.1, 1.0)
DEFAULT_GROUP_GRID = (0.0, 0.1, 1.0)
DEFAULT_ORDER_GRID = (0.0, 0.1, 1.0, 10.0)
DEFAULT_STATES_GRID = (2, 4)


@dataclass(frozen=True)
class TaskSpec:
    """One directed cross-user task for one method."""

    source_user: str
    target_user: str
    method: str
    hyper_grid: tuple[TrotHyperparams, ...] | None = None
    seed: int = 0

    def __post_init__(self):
        method = self.method.lower()
        object.__setattr__(self, "method", method)
        if method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if method != "td" and self.source_user == self.target_user:
            raise ValueError("source and target user must differ (except for td)")
        if self.hyper_grid is not None:
            object.__setattr__(self, "hyper_grid", tuple(self.hyper_grid))


@dataclass
class AdaptReport:
    """Outcome of one task: selected setting, accuracies, per-window dump.

    `coupling` holds the selected configuration's transport plan (when the
    method computes one) for debug dumps; it stays out of `to_dict`.
    """

    task: TaskSpec
    chosen_hyper: TrotHyperparams | None = None
    validation_accuracy: float | None = None
    test_accuracy: float | None = None
    objective_trace: np.ndarray | None = None
    timing: float = 0.0
    predictions: dict | None = None
    error: str | None = None
    coupling: object = None

    def to_dict(self, include_timing: bool = False) -> dict:
        out = {
            "source": self.task.source_user,
            "target": self.task.target_user,
            "method": self.task.method,
            "status": "ok" if self.error is None else "failed",
            "error": self.error,
            "chosen_hyper": None if self.chosen_hyper is None else self.chosen_hyper.to_dict(),
            "validation_accuracy": self.validation_accuracy,
            "test_accuracy": self.test_accuracy,
            "objective_trace": None
            if self.objective_trace is None
            else [float(v) for v in self.objective_trace],
            "predictions": self.predictions,
        }
        if include_timing:
            out["timing_seconds"] = self.timing
        return out


def default_grid(method: str) -> tuple[TrotHyperparams | None, ...]:
    """Hyperparameter grid searched on the validation half for one method."""
    method = method.lower()
    if method == "trot":
        return tuple(
            TrotHyperparams(
                entropy_weight=lam, group_weight=eta, order_weight=tau, n_states=n
            )
            for n, lam, eta, tau in product(
                DEFAULT_STATES_GRID, DEFAULT_ENTROPY_GRID, DEFAULT_GROUP_GRID, DEFAULT_ORDER_GRID
            )
        )
    if method == "otda":
        return tuple(
            TrotHyperparams(entropy_weight=lam, group_weight=eta)
            for lam, eta in product(DEFAULT_ENTROPY_GRID, DEFAULT_GROUP_GRID)
        )
    if method == "ot":
        return tuple(TrotHyperparams(entropy_weight=lam) for lam in DEFAULT_ENTROPY_GRID)
    return (None,)  # na, td, coral take no hyperparameters


def knn1_classify(train: FeatureDataset, query: FeatureDataset) -> np.ndarray:
    """Label of the Euclidean-nearest training window per query window.

    Distance ties resolve to the lowest training index.
    """
    if len(train) == 0:
        raise InsufficientDataError("insufficient data: empty training set")
    if train.labels is None:
        raise TrotError("training dataset has no labels")
    if train.dim != query.dim:
        raise DimensionMismatchError(f"dimension mismatch: {train.dim} vs {query.dim}")
    nearest = pairwise_sq_dists(query.features, train.features).argmin(axis=1)
    return train.labels[nearest]


def temporal_split(target: FeatureDataset) -> tuple[FeatureDataset, FeatureDataset]:
    """First half of the windows (by position) for validation, rest for test."""
    if len(target) < 2:
        raise InsufficientDataError("insufficient data: need at least 2 windows to split")
    half = len(target) // 2
    return target.subset(np.arange(half)), target.subset(np.arange(half, len(target)))


def _accuracy(predicted: np.ndarray, truth: np.ndarray) -> float:
    return float(np.mean(predicted == truth))


def _subsample(dataset: FeatureDataset, rng: np.random.Generator) -> FeatureDataset:
    if len(dataset) <= MAX_COUPLING_WINDOWS:
        return dataset
    keep = np.sort(rng.choice(len(dataset), MAX_COUPLING_WINDOWS, replace=False))
    return dataset.subset(keep)


def _fit_method(
    method: str,
    hyper: TrotHyperparams | None,
    source: FeatureDataset,
    validation: FeatureDataset,
    seed: int,
    cache: dict,
):
    """Produce the training set a 1-NN classifier will use, plus any trace."""
    if method == "na":
        return source, None
    if method == "td":
        return validation, None
    if method == "coral":
        return coral_align(source, validation), None
    if method in ("ot", "otda"):
        rng = np.random.default_rng(seed)
        src_sub = _subsample(source, rng)
        tgt_sub = _subsample(validation, rng)
        cost = pairwise_sq_dists(src_sub.features, tgt_sub.features)
        a = np.full(len(src_sub), 1.0 / len(src_sub))
        b = np.full(len(tgt_sub), 1.0 / len(tgt_sub))
        if method == "ot":
            coupling = sinkhorn(a, b, cost, hyper.entropy_weight, hyper.sinkhorn_iters,
                                hyper.sinkhorn_tol)
            trace = None
        else:
            groups = class_groups_from_labels(src_sub.labels)
            coupling, trace = gcg_solve(a, b, cost, hyper, groups)
        transported = barycentric_project(coupling.values, tgt_sub.features)
        return replace(src_sub, features=transported), trace
    if method == "trot":
        src_atlas = build_atlas(source, hyper.n_states)
        if "pseudo_labels" not in cache:
            cache["pseudo_labels"] = knn1_classify(source, validation)
        tgt_atlas = build_atlas(validation.with_labels(cache["pseudo_labels"]), hyper.n_states)
        cost = cost_matrix(src_atlas, tgt_atlas)
        coupling, trace = gcg_solve(
            src_atlas.weights, tgt_atlas.weights, cost, hyper, order_groups(src_atlas, tgt_atlas)
        )
        mapped = barycentric_map(coupling, src_atlas, tgt_atlas)
        assignment = assign_dataset_states(source, hyper.n_states)
        return transform_samples(source, assignment, mapped), trace
    raise ValueError(f"unknown method {method!r}")


def run_task(
    spec: TaskSpec, source_data: FeatureDataset, target_data: FeatureDataset
) -> AdaptReport:
    """Run one method on one directed user pair under the evaluation protocol.

    Grid search sees only the validation half; the reported test accuracy is
    computed once with the selected hyperparameters.  Failures of individual
    grid points (or of the whole task) are recorded, not raised.
    """
    start = time.perf_counter()
    scaler = fit_maxabs(source_data)
    source = maxabs_fit_apply(source_data, scaler)
    target = maxabs_fit_apply(target_data, scaler)
    validation, test = temporal_split(target)
    if validation.labels is None or test.labels is None:
        return AdaptReport(spec, error="target labels required for evaluation",
                           timing=time.perf_counter() - start)

    grid = spec.hyper_grid if spec.hyper_grid is not None else default_grid(spec.method)
    cache: dict = {}
    best = None
    failures = []
    for hyper in grid:
        try:
            train, trace = _fit_method(spec.method, hyper, source, validation, spec.seed, cache)
            val_acc = _accuracy(knn1_classify(train, validation), validation.labels)
        except TrotError as exc:
            failures.append(str(exc))
            continue
        if best is None or val_acc > best[0]:
            best = (val_acc, hyper, train, trace)
    if best is None:
        return AdaptReport(
            spec,
            error="; ".join(failures) or "no hyperparameters evaluated",
            timing=time.perf_counter() - start,
        )

    val_acc, hyper, train, trace = best
    predicted = knn1_classify(train, test)
    report = AdaptReport(
        task=spec,
        chosen_hyper=hyper,
        validation_accuracy=val_acc,
        test_accuracy=_accuracy(predicted, test.labels),
        objective_trace=trace,
        timing=time.perf_counter() - start,
        predictions={
            "window_index": [int(i) for i in test.window_index],
            "true": [int(v) for v in test.labels],
            "predicted": [int(v) for v in predicted],
        },
    )
    return report


def run_matrix(
    data,
    users: list[str] | None = None,
    methods=METHODS,
    grids: dict | None = None,
    seed: int = 0,
) -> dict:
    """Every ordered user pair x method, as a deterministic report dict.

    `data` is either a directory of per-user feature CSVs (`<user>.csv`) or a
    mapping {user: FeatureDataset}.  `grids` optionally overrides the default
    hyperparameter grid per method.  Users without data are listed as skipped.
    """
    skipped = []
    if isinstance(data, (str, Path)):
        directory = Path(data)
        if users is None:
            users = sorted(p.stem for p in directory.glob("*.csv"))
        datasets = {}
        for user in users:
            path = directory / f"{user}.csv"
            if path.exists():
                datasets[user] = load_features(path, user)
            else:
                skipped.append(user)
    else:
        datasets = dict(data)
        if users is None:
            users = sorted(datasets)
        else:
            skipped = [u for u in users if u not in datasets]
    users = sorted(u for u in users if u in datasets)
    if len(users) < 2:
        raise InsufficientDataError("insufficient data: need at least 2 users")

    methods = [m.lower() for m in methods]
    tasks = []
    table: dict[str, dict[str, float | None]] = {}
    for method in methods:
        table[method] = {}
        for src in users:
            for tgt in users:
                if src == tgt:
                    continue
                grid = None if grids is None else grids.get(method)
                spec = TaskSpec(src, tgt, method, grid, seed)
                try:
                    report = run_task(spec, datasets[src], datasets[tgt])
                except TrotError as exc:
                    report = AdaptReport(spec, error=str(exc))
                tasks.append(report.to_dict())
                table[method][f"{src}->{tgt}"] = report.test_accuracy
    return {
        "users": users,
        "methods": methods,
        "seed": seed,
        "skipped": sorted(skipped),
        "tasks": tasks,
        "table": table,
    }


def matrix_to_json(report: dict) -> str:
    """Canonical JSON for a matrix report; deterministic for fixed inputs."""
    return json.dumps(report, sort_keys=True, indent=2)


def render_table(report: dict) -> str:
    """Aligned-text accuracy table, methods as rows and directed pairs as columns."""
    pairs = sorted({pair for row in report["table"].values() for pair in row})
    width = max(8, *(len(p) for p in pairs)) + 2
    head = "method".ljust(10) + "".join(p.rjust(width) for p in pairs)
    lines = [head, "-" * len(head)]
    for method in report["methods"]:
        row = report["table"][method]
        cells = "".join(
            ("  failed" if row.get(p) is None else f"{row[p]:.4f}").rjust(width) for p in pairs
        )
        lines.append(method.ljust(10) + cells)
    return "\n".join(lines)
