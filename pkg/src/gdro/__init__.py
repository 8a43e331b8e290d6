"""Stochastic no-regret solvers for generalized group DRO.

The library implements the min-max problem

    min over model parameters theta in a Euclidean ball of
    max over group weights q in a convex subset Q of the simplex of
    sum_i q_i * E_{z ~ P_i}[loss(theta; z)]

with Q being the probability simplex, a scaled k-set polytope, or a
permutahedron, and group distributions accessible only through a
stochastic sampling oracle.
"""

from gdro.problem import (
    DataPoint,
    ProblemConstants,
    UncertaintySetSpec,
    eval_loss,
    eval_loss_grad,
    project_ball,
)
from gdro.geometry import (
    Regularizer,
    bregman_divergence,
    entropy_simplex_project,
    permutahedron_bregman_project,
    tsallis_simplex_project,
)
from gdro.data import GroupedDataset, gen_synthetic, load_csv_dataset, oracle_sample
from gdro.solvers import DroProblem, SolverConfig, Trajectory, run_solver, theoretical_rate
from gdro.evaluation import fit_convergence_slope, group_losses, robust_objective
from gdro.lower_bound import LowerBoundInstance, kl_bernoulli

__version__ = "0.1.0"

__all__ = [
    "DataPoint",
    "ProblemConstants",
    "UncertaintySetSpec",
    "eval_loss",
    "eval_loss_grad",
    "project_ball",
    "Regularizer",
    "bregman_divergence",
    "entropy_simplex_project",
    "tsallis_simplex_project",
    "permutahedron_bregman_project",
    "GroupedDataset",
    "gen_synthetic",
    "load_csv_dataset",
    "oracle_sample",
    "DroProblem",
    "SolverConfig",
    "Trajectory",
    "run_solver",
    "theoretical_rate",
    "group_losses",
    "robust_objective",
    "fit_convergence_slope",
    "LowerBoundInstance",
    "kl_bernoulli",
]
