"""Exact robust-objective evaluation, optimality-gap accounting against a
reference solution, and convergence-slope fitting."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from gdro import problem as prob
from gdro.problem import UncertaintySetSpec


@dataclass
class ReferenceSolution:
    """Certified lower envelope for optimality gaps on one (dataset, spec)."""

    theta_ref: np.ndarray
    value_ref: float
    provenance: dict = field(default_factory=dict)


def group_losses(loss_kind: str, theta: np.ndarray, dataset) -> np.ndarray:
    """Exact per-group empirical mean losses (fixed summation order)."""
    L = np.empty(dataset.num_groups)
    for i in range(dataset.num_groups):
        L[i] = prob.batch_losses(loss_kind, theta, dataset.features[i],
                                 dataset.labels[i]).mean()
    return L


def robust_objective(L: np.ndarray, spec: UncertaintySetSpec) -> float:
    """max_{q in Q} <q, L> via sorting.

    simplex: max entry.  permutahedron(alpha): alpha-weighted sum of the
    nonincreasingly sorted losses.  kset: exact LP optimum with the
    fractional cap (greedy fill: cap on the floor(p*m) largest entries,
    remainder weight on the next).
    """
    L = np.asarray(L, dtype=float)
    m = L.size
    if spec.kind == UncertaintySetSpec.SIMPLEX:
        return float(L.max())
    Ls = np.sort(L)[::-1]
    if spec.kind == UncertaintySetSpec.KSET:
        cap = spec.cap(m)
        full = int(np.floor(1.0 / cap + 1e-12))
        value = cap * Ls[:full].sum()
        rest = 1.0 - full * cap
        if rest > 1e-15 and full < m:
            value += rest * Ls[full]
        return float(value)
    alpha = spec.rank_weights_for(m)
    return float(alpha @ Ls)


def optimality_gap(loss_kind: str, theta: np.ndarray, dataset,
                   spec: UncertaintySetSpec, ref: ReferenceSolution) -> float:
    """Robust objective at theta minus the reference value.

    May be slightly negative when the reference is loose; callers clamp at
    reporting time only.
    """
    return robust_objective(group_losses(loss_kind, theta, dataset), spec) - ref.value_ref


def fit_convergence_slope(iterations, gaps, burn_in_fraction: float = 0.1) -> float:
    """Least-squares slope of log(gap) against log(iteration).

    Checkpoints in the first burn_in_fraction of the horizon and nonpositive
    gaps are excluded; at least 5 usable points are required.
    """
    iterations = np.asarray(iterations, dtype=float)
    gaps = np.asarray(gaps, dtype=float)
    if iterations.size < 10:
        raise ValueError("need at least 10 checkpoints")
    cutoff = burn_in_fraction * iterations[-1]
    keep = (iterations > cutoff) & (gaps > 0) & np.isfinite(gaps)
    if keep.sum() < 5:
        raise ValueError("fewer than 5 positive-gap checkpoints after burn-in")
    slope, _ = np.polyfit(np.log(iterations[keep]), np.log(gaps[keep]), 1)
    return float(slope)


def robust_subgradient(loss_kind: str, theta: np.ndarray, dataset,
                       spec: UncertaintySetSpec) -> np.ndarray:
    """Subgradient of the robust objective: worst-case-weighted group gradients."""
    L = group_losses(loss_kind, theta, dataset)
    m = L.size
    if spec.kind == UncertaintySetSpec.SIMPLEX:
        weights = np.zeros(m)
        weights[int(np.argmax(L))] = 1.0
    elif spec.kind == UncertaintySetSpec.KSET:
        cap = spec.cap(m)
        order = np.argsort(-L)
        weights = np.zeros(m)
        full = int(np.floor(1.0 / cap + 1e-12))
        weights[order[:full]] = cap
        rest = 1.0 - full * cap
        if rest > 1e-15 and full < m:
            weights[order[full]] = rest
    else:
        alpha = spec.rank_weights_for(m)
        order = np.argsort(-L)
        weights = np.zeros(m)
        weights[order] = alpha
    g = np.zeros_like(theta)
    for i in range(m):
        if weights[i] == 0.0:
            continue
        _, gi = prob.batch_loss_grad(loss_kind, theta, dataset.features[i], dataset.labels[i])
        g += weights[i] * gi
    return g


def subgradient_reference(loss_kind: str, dataset, spec: UncertaintySetSpec,
                          radius: float, iterations: int = 2000,
                          step_scale: float = 1.0) -> ReferenceSolution:
    """Deterministic full-gradient subgradient method on the robust objective.

    Returns the best iterate found; intended as one ingredient of the
    reference protocol (take the min with long solver runs).
    """
    theta = np.zeros(dataset.dim)
    best_theta = theta
    X = dataset.all_features()
    G = prob.lipschitz_bound(X)
    best = robust_objective(group_losses(loss_kind, theta, dataset), spec)
    for t in range(1, iterations + 1):
        g = robust_subgradient(loss_kind, theta, dataset, spec)
        eta = step_scale * radius / (max(G, 1e-12) * np.sqrt(t))
        theta = prob.project_ball(theta - eta * g, radius)
        val = robust_objective(group_losses(loss_kind, theta, dataset), spec)
        if val < best:
            best, best_theta = val, theta
    return ReferenceSolution(best_theta, float(best),
                             provenance={"method": "subgradient", "iterations": iterations})
