"""Regularized optimal transport between state atlases.

The solver minimizes, over couplings with fixed marginals,

    <gamma, cost> + entropy_weight * H(gamma)
                  + group_weight * Omega(gamma)
                  + order_weight * T(gamma)

where H is the entropy term, Omega the per-column class-group norm and T a
group norm over same-temporal-order (or order-violating) column sets.  The
non-entropic terms are linearized at each iterate so the direction-finding
subproblem stays an entropic transport problem solved by log-domain
Sinkhorn iterations; an Armijo backtracking search on the full objective
keeps the trace non-increasing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError, NumericalFailureError
from .hmm import TemporalAtlas

ENTROPY_GRAD_FLOOR = -745.0  # log of the smallest positive double


@dataclass
class TrotHyperparams:
    """Solver weights and iteration budgets.

    `order_mode` picks which column set the temporal penalty norms: "mismatched"
    (default) penalizes mass on order-violating columns, "matched" applies the
    group norm to same-order columns instead.
    """

    entropy_weight: float = 0.1
    group_weight: float = 0.0
    order_weight: float = 0.0
    order_mode: str = "mismatched"
    n_states: int = 4
    sinkhorn_iters: int = 10_000
    gcg_iters: int = 20
    sinkhorn_tol: float = 1e-9
    gcg_tol: float = 1e-7

    def __post_init__(self):
        if self.entropy_weight <= 0:
            raise ValueError("entropy_weight must be > 0")
        if self.group_weight < 0 or self.order_weight < 0:
            raise ValueError("regularizer weights must be >= 0")
        if self.order_mode not in ("matched", "mismatched"):
            raise ValueError(f"unknown order_mode {self.order_mode!r}")

    def to_dict(self) -> dict:
        return {
            "entropy_weight": self.entropy_weight,
            "group_weight": self.group_weight,
            "order_weight": self.order_weight,
            "order_mode": self.order_mode,
            "n_states": self.n_states,
        }


@dataclass
class Coupling:
    """Transport plan with its prescribed marginals and solve diagnostics."""

    values: np.ndarray  # (k_s, k_t), non-negative
    row_marginal: np.ndarray
    col_marginal: np.ndarray
    marginal_violation: float = 0.0
    iterations: int = 0
    converged: bool = True


def coupling_to_json(coupling: Coupling) -> str:
    import json

    return json.dumps(
        {
            "values": [[float(v) for v in row] for row in coupling.values],
            "row_marginal": [float(v) for v in coupling.row_marginal],
            "col_marginal": [float(v) for v in coupling.col_marginal],
            "marginal_violation": coupling.marginal_violation,
            "iterations": coupling.iterations,
            "converged": coupling.converged,
        },
        sort_keys=True,
    )


def coupling_to_csv(coupling: Coupling, path) -> None:
    """Debug dump of the raw plan matrix."""
    np.savetxt(path, coupling.values, delimiter=",")


@dataclass
class OrderGroups:
    """Index sets steering the group regularizers.

    `class_groups[c]` holds the source rows of one class (used by Omega);
    `matched[i]` / `mismatched[i]` hold the target columns whose temporal
    order equals / differs from source row i's order (used by T).
    """

    class_groups: list[np.ndarray] | None = None
    matched: list[np.ndarray] | None = None
    mismatched: list[np.ndarray] | None = None


def class_groups_from_labels(labels: np.ndarray) -> OrderGroups:
    labels = np.asarray(labels)
    groups = [np.nonzero(labels == c)[0] for c in np.unique(labels)]
    return OrderGroups(class_groups=groups)


def order_groups(src_atlas: TemporalAtlas, tgt_atlas: TemporalAtlas) -> OrderGroups:
    """Build matched/mismatched column sets and source class groups from atlases."""
    src_orders = src_atlas.orders
    tgt_orders = tgt_atlas.orders
    all_cols = np.arange(len(tgt_atlas))
    matched = [np.nonzero(tgt_orders == k)[0] for k in src_orders]
    mismatched = [np.setdiff1d(all_cols, m, assume_unique=True) for m in matched]
    groups = class_groups_from_labels(src_atlas.classes).class_groups
    return OrderGroups(class_groups=groups, matched=matched, mismatched=mismatched)


def pairwise_sq_dists(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances between rows of x and rows of y."""
    if x.shape[1] != y.shape[1]:
        raise DimensionMismatchError(f"dimension mismatch: {x.shape[1]} vs {y.shape[1]}")
    d2 = (x**2).sum(axis=1)[:, None] + (y**2).sum(axis=1)[None, :] - 2.0 * (x @ y.T)
    return np.maximum(d2, 0.0)


def cost_matrix(src_atlas: TemporalAtlas, tgt_atlas: TemporalAtlas) -> np.ndarray:
    """Squared Euclidean distances between source and target state means."""
    return pairwise_sq_dists(src_atlas.means, tgt_atlas.means)


def entropy(gamma: np.ndarray):
    """Entropy term sum g*(log g - 1) with 0 log 0 = 0, and its gradient.

    Gradient entries at zero mass are clamped to a large negative finite
    value instead of -inf.
    """
    g = np.asarray(gamma, dtype=float)
    positive = g > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        log_g = np.where(positive, np.log(np.where(positive, g, 1.0)), ENTROPY_GRAD_FLOOR)
    value = float((np.where(positive, g * log_g, 0.0)).sum() - g.sum())
    return value, log_g


def _group_norm(gamma: np.ndarray, row_groups) -> tuple[float, np.ndarray]:
    value = 0.0
    sub = np.zeros_like(gamma)
    for rows in row_groups:
        block = gamma[rows]
        norms = np.sqrt((block**2).sum(axis=0))
        value += norms.sum()
        nz = norms > 0
        sub[np.ix_(rows, np.nonzero(nz)[0])] = block[:, nz] / norms[nz]
    return float(value), sub


def group_sparse(gamma: np.ndarray, class_groups) -> tuple[float, np.ndarray]:
    """Per-target-column sum of L2 norms over source class groups.

    Subgradient: block / ||block|| per (group, column); zero-norm groups get 0.
    """
    return _group_norm(np.asarray(gamma, dtype=float), class_groups)


def temporal_reg(
    gamma: np.ndarray, groups: OrderGroups, mode: str = "mismatched"
) -> tuple[float, np.ndarray]:
    """Row-wise L2 norms over temporal-order column sets.

    "matched" norms each row's same-order columns (the literal group
    definition); "mismatched" norms the complement so order-violating mass
    is what gets penalized.
    """
    gamma = np.asarray(gamma, dtype=float)
    cols = groups.matched if mode == "matched" else groups.mismatched
    if cols is None:
        raise ValueError("order groups missing matched/mismatched column sets")
    value = 0.0
    sub = np.zeros_like(gamma)
    for i, sel in enumerate(cols):
        v = gamma[i, sel]
        n = np.sqrt((v**2).sum())
        value += n
        if n > 0:
            sub[i, sel] = v / n
    return float(value), sub


def _check_marginals(a: np.ndarray, b: np.ndarray):
    if np.any(a <= 0) or np.any(b <= 0):
        raise ValueError("marginals must be strictly positive")
    if abs(a.sum() - 1.0) > 1e-9 or abs(b.sum() - 1.0) > 1e-9:
        raise ValueError("marginals must each sum to 1")


def _violation(plan: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    return float(
        max(np.abs(plan.sum(axis=1) - a).max(), np.abs(plan.sum(axis=0) - b).max())
    )


def sinkhorn(
    a: np.ndarray,
    b: np.ndarray,
    cost: np.ndarray,
    entropy_weight: float,
    max_iters: int = 10_000,
    tol: float = 1e-9,
) -> Coupling:
    """Entropic transport plan via log-domain Sinkhorn iterations.

    Iterates dual updates until the worst marginal deviation falls below
    `tol` or the budget runs out (then the achieved violation is reported
    with `converged=False`).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    _check_marginals(a, b)
    if entropy_weight <= 0:
        raise ValueError("entropy_weight must be > 0")
    log_k = -np.asarray(cost, dtype=float) / entropy_weight
    log_a, log_b = np.log(a), np.log(b)
    u = np.zeros(len(a))
    v = np.zeros(len(b))
    check_every = 1 if log_k.size <= 10_000 else 10
    violation = np.inf
    it = 0
    for it in range(1, max_iters + 1):
        m = log_k + u[:, None]
        v = log_b - _logsumexp(m, axis=0)
        m = log_k + v[None, :]
        u = log_a - _logsumexp(m, axis=1)
        if it % check_every == 0 or it == max_iters:
            plan = np.exp(log_k + u[:, None] + v[None, :])
            violation = _violation(plan, a, b)
            if not np.isfinite(violation):
                raise NumericalFailureError("numerical failure: NaN in sinkhorn iterates")
            if violation <= tol:
                break
    plan = np.exp(log_k + u[:, None] + v[None, :])
    violation = _violation(plan, a, b)
    if not np.all(np.isfinite(plan)):
        raise NumericalFailureError("numerical failure: non-finite transport plan")
    return Coupling(plan, a, b, violation, it, violation <= tol)


def _logsumexp(m: np.ndarray, axis: int) -> np.ndarray:
    mx = np.max(m, axis=axis, keepdims=True)
    mx = np.where(np.isfinite(mx), mx, 0.0)
    with np.errstate(divide="ignore"):
        return np.squeeze(mx, axis) + np.log(np.exp(m - mx).sum(axis=axis))


def gcg_solve(
    a: np.ndarray,
    b: np.ndarray,
    cost: np.ndarray,
    hyper: TrotHyperparams,
    groups: OrderGroups | None = None,
) -> tuple[Coupling, np.ndarray]:
    """Solve the fully regularized problem by conditional gradient.

    Each iteration linearizes the group penalties at the current plan, solves
    the entropic subproblem on the shifted cost, then backtracks (Armijo,
    sufficient decrease 1e-4, factor 0.5, up to 30 halvings) along the
    feasible segment.  Stops when the relative objective decrease drops
    below `hyper.gcg_tol` or no descent direction remains.

    Returns the final coupling and the objective value per accepted iterate.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    cost = np.asarray(cost, dtype=float)
    _check_marginals(a, b)
    eta, tau = hyper.group_weight, hyper.order_weight
    if eta > 0 and (groups is None or groups.class_groups is None):
        raise ValueError("group_weight > 0 requires class groups")
    if tau > 0 and (groups is None or groups.matched is None):
        raise ValueError("order_weight > 0 requires order groups")

    def penalties(g):
        val, sub = 0.0, np.zeros_like(g)
        if eta > 0:
            v, s = group_sparse(g, groups.class_groups)
            val += eta * v
            sub += eta * s
        if tau > 0:
            v, s = temporal_reg(g, groups, hyper.order_mode)
            val += tau * v
            sub += tau * s
        return val, sub

    def objective(g):
        h, _ = entropy(g)
        return float((g * cost).sum()) + hyper.entropy_weight * h + penalties(g)[0]

    gamma = np.outer(a, b)
    obj = objective(gamma)
    trace = [obj]
    worst_violation = _violation(gamma, a, b)

    for _ in range(hyper.gcg_iters):
        _, pen_sub = penalties(gamma)
        direction = sinkhorn(
            a, b, cost + pen_sub, hyper.entropy_weight, hyper.sinkhorn_iters, hyper.sinkhorn_tol
        )
        worst_violation = max(worst_violation, direction.marginal_violation)
        delta = direction.values - gamma
        _, ent_grad = entropy(gamma)
        slope = float(((cost + hyper.entropy_weight * ent_grad + pen_sub) * delta).sum())
        if slope >= -1e-15:
            break
        alpha, accepted = 1.0, False
        for _ in range(30):
            candidate_obj = objective(gamma + alpha * delta)
            if candidate_obj <= obj + 1e-4 * alpha * slope:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            break
        gamma = gamma + alpha * delta
        previous, obj = obj, candidate_obj
        trace.append(obj)
        if previous - obj < hyper.gcg_tol * max(abs(previous), 1e-30):
            break

    # every iterate is a convex combination of feasible endpoints, so the
    # worst direction violation bounds the violation along the whole path
    worst_violation = max(worst_violation, _violation(gamma, a, b))
    return (
        Coupling(gamma, a, b, worst_violation, len(trace) - 1, True),
        np.asarray(trace),
    )
