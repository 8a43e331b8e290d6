"""One-step online-learning updates for the two players.

Model player: projected online gradient descent on the Euclidean ball.
Weight player: multiplicative-weights (Hedge) on a sparse importance-weighted
reward estimate, its exploration-mixed high-probability variant, and the
inverse-square update normalized in the Tsallis dual parametrization.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from gdro.geometry import EPS_Q, floor_weights, tsallis_simplex_project
from gdro.problem import project_ball

# clip threshold for the tsallis multiplicative factor (pole avoidance)
GAMMA_CLIP = 1e-6

FIXED = "fixed"
INV_SQRT = "inv_sqrt"


@dataclass
class StepSchedule:
    """Step size as a function of the (1-based) round index.

    fixed: eta; inv_sqrt: c / sqrt(t). Both are nonincreasing in t.
    """

    kind: str
    value: float

    def __post_init__(self):
        if self.kind not in (FIXED, INV_SQRT):
            raise ValueError(f"unknown schedule kind: {self.kind!r}")
        if self.value <= 0:
            raise ValueError("step size must be positive")

    def at(self, t: int) -> float:
        if self.kind == FIXED:
            return self.value
        return self.value / np.sqrt(t)


@dataclass
class SparseLossEstimate:
    """Importance-weighted loss estimate supported on a single group."""

    index: int
    value: float

    def __post_init__(self):
        if self.value < 0:
            raise ValueError("estimate value must be nonnegative")


def ogd_step(theta: np.ndarray, grad_estimate: np.ndarray, eta_t: float,
             feasible_radius: float) -> np.ndarray:
    """One projected gradient step on the ball."""
    if eta_t <= 0:
        raise ValueError("eta_t must be positive")
    grad_estimate = np.asarray(grad_estimate, dtype=float)
    if not np.all(np.isfinite(grad_estimate)):
        raise ValueError("non-finite gradient estimate")
    return project_ball(theta - eta_t * grad_estimate, feasible_radius)


def hedge_step(q: np.ndarray, est: SparseLossEstimate, eta_q: float) -> np.ndarray:
    """Multiplicative reward update of entry est.index, in log space.

    Multiplies q[index] by exp(eta_q * est.value) and renormalizes; since the
    estimate is nonnegative, the updated entry never loses relative weight.
    """
    logw = np.log(q)
    logw[est.index] += eta_q * est.value
    w = np.exp(logw - logw.max())
    return floor_weights(w / w.sum())


@dataclass
class TsallisState:
    """Warm start and clip diagnostics for the inverse-square update."""

    warm_alpha: float | None = None
    clip_count: int = 0


def tinf_step(q: np.ndarray, est: SparseLossEstimate, eta_q: float,
              tol: float = 1e-12, state: TsallisState | None = None) -> np.ndarray:
    """Inverse-square reward update followed by the Tsallis normalization.

    Entry i maps to q_i * (1 - eta_q * value * sqrt(q_i))^(-2) where value is
    the importance-weighted loss (so eta*value*sqrt(q_i) = eta*loss/sqrt(q_i)
    for value = loss/q_i).  The factor argument is clipped at GAMMA_CLIP when
    the update would cross the pole; clips are counted, not raised.
    """
    i = est.index
    q_tilde = np.array(q, dtype=float)
    arg = 1.0 - eta_q * est.value * np.sqrt(q[i])
    if arg < GAMMA_CLIP:
        arg = GAMMA_CLIP
        if state is not None:
            state.clip_count += 1
    q_tilde[i] = q[i] * arg ** (-2.0)
    warm = state.warm_alpha if state is not None else None
    q_next, alpha = tsallis_simplex_project(q_tilde, tol=tol, warm_alpha=warm)
    if state is not None:
        state.warm_alpha = alpha
    return floor_weights(q_next)


def exp3p_step(q: np.ndarray, est: SparseLossEstimate, eta_q: float,
               mix_gamma: float, bias_beta: float) -> np.ndarray:
    """Hedge update on the optimistically biased reward, mixed with uniform.

    The reward estimate is est.value + bias_beta / q[index]; after the
    multiplicative update, q <- (1 - gamma) q + gamma/m, so min_i q_i >= gamma/m.
    """
    if not 0 <= mix_gamma <= 1 or bias_beta < 0:
        raise ValueError("mix_gamma must be in [0, 1] and bias_beta >= 0")
    m = q.size
    if mix_gamma >= 1.0:
        return np.full(m, 1.0 / m)
    biased = SparseLossEstimate(est.index, est.value + bias_beta / q[est.index])
    q_next = hedge_step(q, biased, eta_q)
    if mix_gamma > 0.0:
        q_next = (1.0 - mix_gamma) * q_next + mix_gamma / m
    return q_next


def exp3p_defaults(m: int, T: int) -> tuple[float, float]:
    """High-probability tuning (mix_gamma, bias_beta) for horizon T."""
    gamma = min(1.0, np.sqrt(m * np.log(m) / T)) if m > 1 else 0.0
    beta = np.sqrt(np.log(max(m, 2)) / (m * T))
    return float(gamma), float(beta)


@dataclass
class LearnerTrace:
    """Recorded (iterate, linear gradient/estimate) pairs for regret audits."""

    iterates: list = field(default_factory=list)
    gradients: list = field(default_factory=list)

    def record(self, x: np.ndarray, g: np.ndarray):
        self.iterates.append(np.array(x, dtype=float))
        self.gradients.append(np.array(g, dtype=float))


def regret_audit(trace: LearnerTrace, comparator: np.ndarray) -> float:
    """Cumulative linearized regret sum_t <g_t, x_t - comparator>.

    For a reward-maximizing player pass the negated gradients (or negate the
    result).  Used in property tests against the closed-form regret bounds.
    """
    comparator = np.asarray(comparator, dtype=float)
    total = 0.0
    for x, g in zip(trace.iterates, trace.gradients):
        total += float(g @ (x - comparator))
    return total
