"""Problem definition: losses, gradients, the ball-constrained feasible set,
problem constants, and uncertainty-set specifications.

Losses are for linear binary classifiers with labels in {-1, +1}:

    logistic:  log(1 + exp(-b * <a, theta>))
    hinge:     max(0, 1 - b * <a, theta>)

The feasible set is always the Euclidean ball of a given radius centered at
the origin.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LOGISTIC = "logistic"
HINGE = "hinge"
LOSS_KINDS = (LOGISTIC, HINGE)


class DimensionMismatch(ValueError):
    """Feature vector and parameter vector have different lengths."""


@dataclass
class ProblemConstants:
    """Constants entering the theoretical convergence bounds.

    lipschitz_G bounds the Euclidean norm of the loss gradient, range_M the
    loss values, diameter_D the Euclidean diameter of the feasible set.
    """

    lipschitz_G: float
    diameter_D: float
    range_M: float
    num_groups_m: int
    dim_n: int

    def __post_init__(self):
        if self.lipschitz_G < 0:
            raise ValueError("lipschitz_G must be nonnegative")
        if self.diameter_D <= 0 or self.range_M <= 0:
            raise ValueError("diameter_D and range_M must be positive")
        if self.num_groups_m < 1 or self.dim_n < 1:
            raise ValueError("num_groups_m and dim_n must be positive")


@dataclass
class DataPoint:
    features: np.ndarray
    label: float  # -1 or +1

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        if self.label not in (-1.0, 1.0):
            raise ValueError(f"label must be -1 or +1, got {self.label}")


@dataclass
class UncertaintySetSpec:
    """Convex weight set Q inside the probability simplex.

    kind is one of "simplex", "kset" (coordinates capped at 1/(p*m)), or
    "permutahedron" (convex hull of permutations of a nonincreasing weight
    vector alpha summing to 1).
    """

    kind: str
    p: float | None = None
    rank_weights: np.ndarray | None = field(default=None)

    SIMPLEX = "simplex"
    KSET = "kset"
    PERMUTAHEDRON = "permutahedron"

    def __post_init__(self):
        if self.kind == self.SIMPLEX:
            pass
        elif self.kind == self.KSET:
            if self.p is None or not 0 < self.p <= 1:
                raise ValueError("kset requires p in (0, 1]")
        elif self.kind == self.PERMUTAHEDRON:
            a = np.asarray(self.rank_weights, dtype=float)
            if a.ndim != 1 or a.size == 0:
                raise ValueError("rank_weights must be a nonempty vector")
            if np.any(np.diff(a) > 1e-15) or np.any(a < -1e-15):
                raise ValueError("rank_weights must be nonincreasing and nonnegative")
            if abs(a.sum() - 1.0) > 1e-9:
                raise ValueError("rank_weights must sum to 1")
            self.rank_weights = np.maximum(a, 0.0)
        else:
            raise ValueError(f"unknown uncertainty set kind: {self.kind!r}")

    @classmethod
    def simplex(cls) -> "UncertaintySetSpec":
        return cls(cls.SIMPLEX)

    @classmethod
    def kset(cls, p: float) -> "UncertaintySetSpec":
        return cls(cls.KSET, p=p)

    @classmethod
    def permutahedron(cls, rank_weights) -> "UncertaintySetSpec":
        return cls(cls.PERMUTAHEDRON, rank_weights=np.asarray(rank_weights, dtype=float))

    def cap(self, m: int) -> float:
        """Coordinate cap 1/(p*m) of the k-set polytope."""
        if self.kind != self.KSET:
            raise ValueError("cap is only defined for kset")
        c = 1.0 / (self.p * m)
        if c < 1.0 / m - 1e-12:
            raise ValueError("cap below 1/m: the set would be empty")
        return c

    def rank_weights_for(self, m: int) -> np.ndarray:
        """Equivalent permutahedron weight vector alpha of length m.

        For kset this is exact only when p*m is an integer k
        (alpha = (1/k, ..., 1/k, 0, ..., 0)).
        """
        if self.kind == self.SIMPLEX:
            a = np.zeros(m)
            a[0] = 1.0
            return a
        if self.kind == self.KSET:
            k = self.p * m
            k_int = round(k)
            if abs(k - k_int) > 1e-9:
                raise ValueError("kset with non-integral p*m has no exact permutahedron form")
            a = np.zeros(m)
            a[:k_int] = 1.0 / k_int
            return a
        a = np.asarray(self.rank_weights, dtype=float)
        if a.size != m:
            raise ValueError(f"rank_weights have length {a.size}, expected {m}")
        return a


def eval_loss(kind: str, theta: np.ndarray, point: DataPoint) -> float:
    """Loss of a linear classifier at one data point. Always >= 0."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != point.features.shape:
        raise DimensionMismatch(f"theta has shape {theta.shape}, features {point.features.shape}")
    margin = point.label * float(point.features @ theta)
    if kind == LOGISTIC:
        return float(np.logaddexp(0.0, -margin))
    if kind == HINGE:
        return max(0.0, 1.0 - margin)
    raise ValueError(f"unknown loss kind: {kind!r}")


def eval_loss_grad(kind: str, theta: np.ndarray, point: DataPoint) -> np.ndarray:
    """Gradient of eval_loss with respect to theta.

    At the hinge kink (margin exactly 1) the subgradient -b*a is returned.
    """
    theta = np.asarray(theta, dtype=float)
    if theta.shape != point.features.shape:
        raise DimensionMismatch(f"theta has shape {theta.shape}, features {point.features.shape}")
    b, a = point.label, point.features
    margin = b * float(a @ theta)
    if kind == LOGISTIC:
        # sigmoid(-margin) computed stably
        s = 0.5 * (1.0 - np.tanh(0.5 * margin))
        return -b * s * a
    if kind == HINGE:
        if margin <= 1.0:
            return -b * a
        return np.zeros_like(a)
    raise ValueError(f"unknown loss kind: {kind!r}")


def batch_loss_grad(kind: str, theta: np.ndarray, X: np.ndarray, y: np.ndarray):
    """Mean loss and mean gradient over a batch (X: (B, n), y: (B,))."""
    margins = y * (X @ theta)
    if kind == LOGISTIC:
        losses = np.logaddexp(0.0, -margins)
        s = 0.5 * (1.0 - np.tanh(0.5 * margins))
        grad = -((y * s) @ X) / len(y)
    elif kind == HINGE:
        losses = np.maximum(0.0, 1.0 - margins)
        active = margins <= 1.0
        grad = -((y * active) @ X) / len(y)
    else:
        raise ValueError(f"unknown loss kind: {kind!r}")
    return float(losses.mean()), grad


def batch_losses(kind: str, theta: np.ndarray, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    margins = y * (X @ theta)
    if kind == LOGISTIC:
        return np.logaddexp(0.0, -margins)
    if kind == HINGE:
        return np.maximum(0.0, 1.0 - margins)
    raise ValueError(f"unknown loss kind: {kind!r}")


def project_ball(theta: np.ndarray, radius: float) -> np.ndarray:
    """Euclidean projection onto the origin-centered ball. Idempotent."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    theta = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(theta)):
        raise ValueError("non-finite parameter vector")
    # rescale until the norm actually lands inside the ball so repeated
    # projection is a bitwise no-op despite rounding in the scale factor
    norm = float(np.linalg.norm(theta))
    while norm > radius:
        theta = theta * (radius / norm)
        norm = float(np.linalg.norm(theta))
    return theta


def loss_range_bound(kind: str, radius: float, X: np.ndarray) -> float:
    """Upper bound M on the loss over the ball, from a held sample of features.

    Uses max |<a, theta>| <= radius * max ||a|| plus the loss-specific offset.
    """
    max_margin = radius * float(np.max(np.linalg.norm(X, axis=1))) if len(X) else 0.0
    if kind == LOGISTIC:
        return float(np.logaddexp(0.0, max_margin))
    if kind == HINGE:
        return 1.0 + max_margin
    raise ValueError(f"unknown loss kind: {kind!r}")


def lipschitz_bound(X: np.ndarray) -> float:
    """Gradient-norm bound G: both losses have ||grad|| <= ||a||."""
    if len(X) == 0:
        return 0.0
    return float(np.max(np.linalg.norm(X, axis=1)))
