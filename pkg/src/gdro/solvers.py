"""Full DRO solvers: the generic mirror-descent dynamics for arbitrary
uncertainty sets, the two simplex-specialized solvers (multiplicative
weights and Tsallis-dual updates on importance-weighted estimates), the
uniform-sampling baseline, and the exploration-mixed variant.

All solvers are stochastic no-regret dynamics: the model player runs
projected online gradient descent, the weight player runs online mirror
descent on unbiased gradient estimates built from one sampled group per
iteration.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from gdro import evaluation, problem as prob
from gdro.data import GroupedDataset, SOLVER_STREAM, make_rng, oracle_sample
from gdro.geometry import (
    ENTROPY,
    TSALLIS,
    Regularizer,
    floor_weights,
    permutahedron_bregman_project,
)
from gdro.learners import (
    GAMMA_CLIP,
    SparseLossEstimate,
    StepSchedule,
    TsallisState,
    exp3p_defaults,
    exp3p_step,
    hedge_step,
    ogd_step,
    tinf_step,
)
from gdro.problem import UncertaintySetSpec

OMD_ENTROPY = "omd_entropy"
OMD_TSALLIS = "omd_tsallis"
EXP3 = "exp3"
TINF = "tinf"
SAGAWA = "sagawa"
EXP3P = "exp3p"
ALGORITHMS = (OMD_ENTROPY, OMD_TSALLIS, EXP3, TINF, SAGAWA, EXP3P)
SIMPLEX_ONLY = (EXP3, TINF, SAGAWA, EXP3P)


@dataclass
class DroProblem:
    """A DRO instance: loss, ball radius, group oracles, uncertainty set."""

    loss_kind: str
    radius: float
    dataset: GroupedDataset
    spec: UncertaintySetSpec

    def __post_init__(self):
        if self.loss_kind not in prob.LOSS_KINDS:
            raise ValueError(f"unknown loss kind: {self.loss_kind!r}")
        if self.radius <= 0:
            raise ValueError("radius must be positive")

    @property
    def num_groups(self) -> int:
        return self.dataset.num_groups

    @property
    def dim(self) -> int:
        return self.dataset.dim

    def sample_batch(self, group, batch_size, rng):
        """One i.i.d. with-replacement batch from a group."""
        return oracle_sample(self.dataset, group, batch_size, rng)

    def sample_loss_grad(self, theta, group, batch_size, rng):
        """Mean loss and mean gradient over one i.i.d. batch from a group."""
        X, y = self.sample_batch(group, batch_size, rng)
        return prob.batch_loss_grad(self.loss_kind, theta, X, y)

    def exact_group_losses(self, theta) -> np.ndarray:
        return evaluation.group_losses(self.loss_kind, theta, self.dataset)

    def constants(self) -> prob.ProblemConstants:
        X = self.dataset.all_features()
        return prob.ProblemConstants(
            lipschitz_G=prob.lipschitz_bound(X),
            diameter_D=2.0 * self.radius,
            range_M=prob.loss_range_bound(self.loss_kind, self.radius, X),
            num_groups_m=self.num_groups,
            dim_n=self.dim,
        )


@dataclass
class SolverConfig:
    algorithm: str
    theta_schedule: StepSchedule
    q_step: float
    iterations: int
    minibatch: int = 10
    seed: int = 0
    checkpoint_every: int | None = None  # None -> geometric schedule

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm: {self.algorithm!r}")
        if self.iterations < 1 or self.minibatch < 1:
            raise ValueError("iterations and minibatch must be >= 1")
        if self.q_step <= 0:
            raise ValueError("q_step must be positive")


@dataclass
class Trajectory:
    """Per-checkpoint records plus run diagnostics."""

    iterations: np.ndarray          # checkpoint times, strictly increasing
    objectives: np.ndarray          # robust objective of the averaged iterate
    gaps: np.ndarray                # objective minus reference (nan without one)
    averaged_thetas: list           # averaged iterate at each checkpoint
    q_snapshots: list               # weight vector at each checkpoint
    group_query_counts: np.ndarray  # oracle queries per group, sums to T
    clip_count: int = 0
    final_theta: np.ndarray | None = None

    @property
    def final_averaged_theta(self) -> np.ndarray:
        return self.averaged_thetas[-1]


def sample_group(q: np.ndarray, rng: np.random.Generator) -> int:
    """One index drawn with probabilities q (inverse-CDF on one uniform)."""
    u = rng.random()
    return min(int(np.searchsorted(np.cumsum(q), u, side="right")), q.size - 1)


def make_estimates(loss_kind, theta, q, i_t, X, y):
    """Gradient estimates from one batch of the sampled group i_t ~ q.

    Model player gets the plain batch-mean gradient; weight player gets the
    importance-weighted batch-mean loss (mean loss / q[i_t]) on coordinate
    i_t.  Both are unbiased under i_t ~ q, z ~ P_{i_t}.
    """
    if len(y) == 0:
        raise ValueError("empty batch")
    loss, grad = prob.batch_loss_grad(loss_kind, theta, X, y)
    return grad, SparseLossEstimate(i_t, loss / q[i_t])


def make_estimates_sagawa(loss_kind, theta, q, i_t_uniform, X, y):
    """Uniform-sampling estimates: gradient scaled by m*q[i], loss by m."""
    if len(y) == 0:
        raise ValueError("empty batch")
    m = q.size
    loss, grad = prob.batch_loss_grad(loss_kind, theta, X, y)
    return m * q[i_t_uniform] * grad, SparseLossEstimate(i_t_uniform, m * loss)


def checkpoint_times(T: int, every: int | None = None) -> np.ndarray:
    """Geometric schedule ceil(1.2^k), deduplicated, always including T."""
    if every is not None:
        ts = np.arange(every, T + 1, every)
        return np.unique(np.append(ts, T))
    ts = []
    x = 1.0
    while x <= T:
        ts.append(int(np.ceil(x)))
        x *= 1.2
    ts.append(T)
    return np.unique(np.array(ts, dtype=int))


def run_solver(problem, config: SolverConfig, ref_value: float | None = None) -> Trajectory:
    """Run T iterations of the configured dynamics from the uniform weight
    vector and the zero model vector; returns checkpoint records of the
    running-average iterate.  Deterministic given the seed."""
    algo = config.algorithm
    spec = problem.spec
    if algo in SIMPLEX_ONLY and spec.kind != UncertaintySetSpec.SIMPLEX:
        raise ValueError(f"{algo} supports only the simplex uncertainty set")
    m, n = problem.num_groups, problem.dim
    T = config.iterations
    rng = make_rng(config.seed, SOLVER_STREAM)
    radius = problem.radius
    eta_q = config.q_step

    theta = np.zeros(n)
    theta_sum = np.zeros(n)
    q = np.full(m, 1.0 / m)
    tstate = TsallisState()
    reg = Regularizer(TSALLIS if algo == OMD_TSALLIS else ENTROPY)
    if algo == EXP3P:
        mix_gamma, bias_beta = exp3p_defaults(m, T)
    counts = np.zeros(m, dtype=np.int64)

    marks = checkpoint_times(T, config.checkpoint_every)
    mark_set = set(int(t) for t in marks)
    rec_t, rec_obj, rec_gap, rec_theta, rec_q = [], [], [], [], []

    for t in range(1, T + 1):
        if algo == SAGAWA:
            i_t = int(rng.integers(m))
        else:
            i_t = sample_group(q, rng)
        counts[i_t] += 1
        if hasattr(problem, "sample_batch"):
            X, y = problem.sample_batch(i_t, config.minibatch, rng)
            if algo == SAGAWA:
                grad, est = make_estimates_sagawa(problem.loss_kind, theta, q, i_t, X, y)
            else:
                grad, est = make_estimates(problem.loss_kind, theta, q, i_t, X, y)
        else:
            # problems without raw data batches report loss and gradient directly
            loss, grad = problem.sample_loss_grad(theta, i_t, config.minibatch, rng)
            if algo == SAGAWA:
                grad = m * q[i_t] * grad
                est = SparseLossEstimate(i_t, m * loss)
            else:
                est = SparseLossEstimate(i_t, loss / q[i_t])
        theta_sum += theta
        theta = ogd_step(theta, grad, config.theta_schedule.at(t), radius)
        if algo in (EXP3, SAGAWA):
            q = hedge_step(q, est, eta_q)
        elif algo == TINF:
            q = tinf_step(q, est, eta_q, state=tstate)
        elif algo == EXP3P:
            q = exp3p_step(q, est, eta_q, mix_gamma, bias_beta)
        else:
            q = _generic_omd_update(q, est, eta_q, reg, spec, tstate)
        if t in mark_set:
            theta_bar = theta_sum / t  # average of theta_1..theta_t (pre-update iterates)
            L = problem.exact_group_losses(theta_bar)
            obj = evaluation.robust_objective(L, spec)
            rec_t.append(t)
            rec_obj.append(obj)
            rec_gap.append(obj - ref_value if ref_value is not None else np.nan)
            rec_theta.append(theta_bar)
            rec_q.append(q.copy())

    return Trajectory(
        iterations=np.array(rec_t, dtype=int),
        objectives=np.array(rec_obj),
        gaps=np.array(rec_gap),
        averaged_thetas=rec_theta,
        q_snapshots=rec_q,
        group_query_counts=counts,
        clip_count=tstate.clip_count,
        final_theta=theta,
    )


def _generic_omd_update(q, est, eta_q, reg, spec, tstate):
    """Mirror step through grad Psi followed by the Bregman projection."""
    dual = reg.grad(q)
    if reg.kind == TSALLIS:
        # keep the dual strictly negative (pole avoidance, mirrors tinf_step)
        capped = min(dual[est.index] + eta_q * est.value,
                     -GAMMA_CLIP / np.sqrt(q[est.index]))
        if capped < dual[est.index] + eta_q * est.value:
            tstate.clip_count += 1
        dual[est.index] = capped
        q_tilde = reg.grad_inverse(dual)
    else:
        dual[est.index] += eta_q * est.value
        q_tilde = np.exp(dual - dual.max())
    return floor_weights(permutahedron_bregman_project(q_tilde, spec, reg))


def theoretical_rate(algorithm: str, constants: prob.ProblemConstants, T: int) -> float:
    """Closed-form expected-optimality-gap bound at the optimized step sizes."""
    if T < 1:
        raise ValueError("T must be >= 1")
    G, D, M, m = (constants.lipschitz_G, constants.diameter_D,
                  constants.range_M, constants.num_groups_m)
    if algorithm in (EXP3, EXP3P, OMD_ENTROPY):
        return float(np.sqrt(2.0) * np.sqrt(G**2 * D**2 + 2.0 * M**2 * m * np.log(m)) / np.sqrt(T))
    if algorithm in (TINF, OMD_TSALLIS):
        return float(np.sqrt(2.0) * np.sqrt(G**2 * D**2 + 4.0 * M**2 * m) / np.sqrt(T))
    if algorithm == SAGAWA:
        return float(np.sqrt(2.0) * m * np.sqrt((G**2 * D**2 + 2.0 * M**2 * np.log(m)) / T))
    raise ValueError(f"unknown algorithm: {algorithm!r}")


def generic_convergence_bound(constants: prob.ProblemConstants, eta_theta: StepSchedule,
                              eta_q: float, T: int, local_norm_bound: float,
                              breg_radius: float) -> float:
    """Bound for arbitrary nonincreasing model steps and fixed weight step:
    (G^2/2 sum_t eta_t + D^2/(2 eta_T) + eta_q/2 * local_norm_bound * T
     + breg_radius / eta_q) / T."""
    G, D = constants.lipschitz_G, constants.diameter_D
    eta_sum = sum(eta_theta.at(t) for t in range(1, T + 1))
    return float((0.5 * G**2 * eta_sum + 0.5 * D**2 / eta_theta.at(T)
                  + 0.5 * eta_q * local_norm_bound * T + breg_radius / eta_q) / T)
