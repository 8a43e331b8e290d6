"""Hard instance family for query-complexity experiments.

Each of m groups realizes the loss  Z1 * delta*theta + Z2 * delta*(1-theta) + Z3
over theta in the unit interval, where groups 1..m-1 have Z1 = 0, Z2 = 1 and
group m has Z1 = 1, Z2 = 0, and Z3 is a Bernoulli noise term with a
per-group bias.  The base instance uses bias 1/2 everywhere; the perturbed
instance raises one non-last group's bias to 1/2 + delta.  Any fixed theta
is at least delta/4 suboptimal on one of the two instances, while their
oracle outcomes are nearly indistinguishable (Bernoulli KL <= 8 delta^2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from gdro.problem import UncertaintySetSpec


@dataclass
class LowerBoundInstance:
    m: int
    delta: float
    star_index: int | None = None  # 0-based perturbed group, must not be m-1
    scale: float = 1.0             # optional loss scale (losses in [0, 2*scale])

    def __post_init__(self):
        if self.m < 2:
            raise ValueError("need at least 2 groups")
        if not 0 <= self.delta < 0.25:
            raise ValueError("delta must lie in [0, 1/4)")
        if self.star_index is not None and not 0 <= self.star_index < self.m - 1:
            raise ValueError("star_index must be a non-last group")

    @property
    def mu(self) -> np.ndarray:
        """Bernoulli bias vector of the noise term."""
        mu = np.full(self.m, 0.5)
        if self.star_index is not None:
            mu[self.star_index] = 0.5 + self.delta
        return mu

    def minimax_value(self) -> float:
        """Exact min over theta of the worst-group expected loss."""
        if self.star_index is None:
            return self.scale * (0.5 + self.delta / 2.0)  # attained at theta = 1/2
        return self.scale * (0.5 + self.delta)            # attained at theta = 1


def lb_expected_loss(inst: LowerBoundInstance, group_index: int, theta: float) -> float:
    """Closed-form expected loss of one group at theta in [0, 1]."""
    _check_theta(theta)
    mu = inst.mu
    if group_index == inst.m - 1:
        return inst.scale * (inst.delta * theta + mu[group_index])
    return inst.scale * (inst.delta * (1.0 - theta) + mu[group_index])


def lb_sample(inst: LowerBoundInstance, group_index: int, theta: float,
              rng: np.random.Generator) -> float:
    """One realized loss: the deterministic slope term plus Bernoulli noise."""
    _check_theta(theta)
    z3 = 1.0 if rng.random() < inst.mu[group_index] else 0.0
    if group_index == inst.m - 1:
        return inst.scale * (inst.delta * theta + z3)
    return inst.scale * (inst.delta * (1.0 - theta) + z3)


def lb_optimality_gap(inst: LowerBoundInstance, theta: float) -> float:
    """Worst-group expected loss at theta minus the instance minimax value."""
    losses = [lb_expected_loss(inst, i, theta) for i in range(inst.m)]
    return max(losses) - inst.minimax_value()


def lb_check_separation(delta: float, star_index: int, m: int,
                        theta_grid_step: float = 1e-4) -> float:
    """min over a theta grid of max{gap on base instance, gap on perturbed}.

    The analytical value is >= delta/4 for every theta; the returned grid
    minimum can undershoot only by the grid resolution.
    """
    if theta_grid_step <= 0:
        raise ValueError("theta_grid_step must be positive")
    base = LowerBoundInstance(m, delta)
    perturbed = LowerBoundInstance(m, delta, star_index=star_index)
    thetas = np.arange(0.0, 1.0 + theta_grid_step / 2, theta_grid_step)
    thetas = np.minimum(thetas, 1.0)

    def gap_grid(inst):
        down_bias = inst.mu[:-1].max()  # groups with slope -delta
        worst = np.maximum(inst.delta * (1.0 - thetas) + down_bias,
                           inst.delta * thetas + inst.mu[-1]) * inst.scale
        return worst - inst.minimax_value()

    return float(np.min(np.maximum(gap_grid(base), gap_grid(perturbed))))


def kl_bernoulli(p: float, q: float) -> float:
    """KL divergence between Bernoulli(p) and Bernoulli(q), p, q in (0, 1)."""
    if not (0 < p < 1 and 0 < q < 1):
        raise ValueError("p and q must lie in the open interval (0, 1)")
    return float(p * np.log(p / q) + (1.0 - p) * np.log((1.0 - p) / (1.0 - q)))


class LowerBoundProblem:
    """Adapter exposing a hard instance through the solver interface.

    The unit interval is re-centered so the solver's origin-centered ball of
    radius 1/2 covers it: solver parameter x corresponds to theta = x + 1/2.
    """

    def __init__(self, inst: LowerBoundInstance):
        self.inst = inst
        self.loss_kind = "interval"  # not a classifier loss
        self.radius = 0.5
        self.spec = UncertaintySetSpec.simplex()

    @property
    def num_groups(self) -> int:
        return self.inst.m

    @property
    def dim(self) -> int:
        return 1

    def _theta(self, x: np.ndarray) -> float:
        return float(np.clip(x[0] + 0.5, 0.0, 1.0))

    def sample_loss_grad(self, x, group, batch_size, rng):
        inst = self.inst
        theta = self._theta(x)
        z3 = (rng.random(batch_size) < inst.mu[group]).mean()
        if group == inst.m - 1:
            loss = inst.scale * (inst.delta * theta + z3)
            grad = np.array([inst.scale * inst.delta])
        else:
            loss = inst.scale * (inst.delta * (1.0 - theta) + z3)
            grad = np.array([-inst.scale * inst.delta])
        return float(loss), grad

    def exact_group_losses(self, x) -> np.ndarray:
        theta = self._theta(x)
        return np.array([lb_expected_loss(self.inst, i, theta) for i in range(self.inst.m)])


def _check_theta(theta: float):
    if not 0.0 <= theta <= 1.0:
        raise ValueError("theta must lie in [0, 1]")
