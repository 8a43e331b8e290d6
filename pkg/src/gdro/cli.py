"""Experiment orchestration: JSON run configs, solver execution, CSV
trajectory emission, a deterministic grid hyperparameter sweep, and the
hard-instance demo.

Config format: a single JSON file with nested sections (documented in the
README).  Unknown keys are errors, not warnings.  Step sizes follow the
experimental protocol  eta_theta(t) = c_theta * radius / sqrt(t)  and
eta_q = c_q * sqrt(log(m) / (m * T)).
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from gdro import __version__, evaluation
from gdro.data import gen_synthetic, load_csv_dataset
from gdro.learners import INV_SQRT, StepSchedule
from gdro.lower_bound import LowerBoundInstance, LowerBoundProblem
from gdro.problem import UncertaintySetSpec
from gdro.solvers import ALGORITHMS, DroProblem, SolverConfig, run_solver

FLOAT_FMT = "%.12g"

_SCHEMA = {
    "dataset": {"kind", "m", "n", "points_per_group", "flip_prob", "seed",
                "path", "label_column", "group_columns", "feature_columns"},
    "loss": None,
    "radius": None,
    "uncertainty": {"kind", "p", "alpha"},
    "solver": {"algorithms", "iterations", "minibatch", "seeds", "c_theta",
               "c_q", "checkpoint_every"},
    "reference": {"mode", "iterations"},
    "sweep": {"grid_theta", "grid_q", "iterations", "seeds"},
}


class ConfigError(ValueError):
    pass


def load_config(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        cfg = json.load(fh)
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict):
    unknown = [k for k in cfg if k not in _SCHEMA]
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    for section, allowed in _SCHEMA.items():
        if allowed is None or section not in cfg:
            continue
        bad = [k for k in cfg[section] if k not in allowed]
        if bad:
            raise ConfigError(f"unknown keys in [{section}]: {bad}")
    for required in ("dataset", "loss", "radius", "uncertainty", "solver"):
        if required not in cfg:
            raise ConfigError(f"missing config section: {required!r}")
    if cfg["loss"] not in ("logistic", "hinge"):
        raise ConfigError(f"unknown loss: {cfg['loss']!r}")
    for a in cfg["solver"].get("algorithms", []):
        if a not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm: {a!r}")


def build_dataset(dcfg: dict):
    if dcfg["kind"] == "synthetic":
        return gen_synthetic(dcfg["m"], dcfg["n"], dcfg["points_per_group"],
                             flip_prob=dcfg.get("flip_prob", 0.1),
                             seed=dcfg.get("seed", 0))
    if dcfg["kind"] == "csv":
        schema = {"label_column": dcfg["label_column"],
                  "group_columns": dcfg["group_columns"],
                  "feature_columns": dcfg["feature_columns"]}
        return load_csv_dataset(dcfg["path"], schema)
    raise ConfigError(f"unknown dataset kind: {dcfg['kind']!r}")


def build_spec(ucfg: dict) -> UncertaintySetSpec:
    kind = ucfg["kind"]
    if kind == "simplex":
        return UncertaintySetSpec.simplex()
    if kind == "kset":
        return UncertaintySetSpec.kset(ucfg["p"])
    if kind == "permutahedron":
        return UncertaintySetSpec.permutahedron(np.asarray(ucfg["alpha"], dtype=float))
    raise ConfigError(f"unknown uncertainty kind: {kind!r}")


def step_sizes(m: int, T: int, radius: float, c_theta: float, c_q: float):
    theta_schedule = StepSchedule(INV_SQRT, c_theta * radius)
    eta_q = c_q * np.sqrt(np.log(max(m, 2)) / (m * T))
    return theta_schedule, float(eta_q)


def write_trajectory_csv(path, traj, with_gap: bool):
    lines = ["iteration,objective,gap" if with_gap else "iteration,objective"]
    for k, t in enumerate(traj.iterations):
        row = f"{t},{FLOAT_FMT % traj.objectives[k]}"
        if with_gap:
            row += f",{FLOAT_FMT % traj.gaps[k]}"
        lines.append(row)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def run_experiment(config_path, outdir, seed_override=None) -> Path:
    """Run all configured (algorithm, seed) combinations; returns outdir."""
    t_start = time.time()
    cfg = load_config(config_path)
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    dataset = build_dataset(cfg["dataset"])
    spec = build_spec(cfg["uncertainty"])
    problem = DroProblem(cfg["loss"], float(cfg["radius"]), dataset, spec)
    scfg = cfg["solver"]
    T = int(scfg["iterations"])
    seeds = [seed_override] if seed_override is not None else list(scfg.get("seeds", [0]))
    theta_schedule, eta_q = step_sizes(dataset.num_groups, T, problem.radius,
                                       scfg.get("c_theta", 1.0), scfg.get("c_q", 1.0))

    ref_value = None
    rcfg = cfg.get("reference", {"mode": "none"})
    if rcfg.get("mode", "none") == "subgradient":
        ref = evaluation.subgradient_reference(cfg["loss"], dataset, spec, problem.radius,
                                               iterations=rcfg.get("iterations", 2000))
        ref_value = ref.value_ref

    for algo in scfg["algorithms"]:
        for seed in seeds:
            config = SolverConfig(algorithm=algo, theta_schedule=theta_schedule,
                                  q_step=eta_q, iterations=T,
                                  minibatch=scfg.get("minibatch", 10), seed=int(seed),
                                  checkpoint_every=scfg.get("checkpoint_every"))
            traj = run_solver(problem, config, ref_value=ref_value)
            write_trajectory_csv(outdir / f"{algo}_seed{seed}.csv", traj,
                                 with_gap=ref_value is not None)
            np.savetxt(outdir / f"{algo}_seed{seed}_theta.csv",
                       traj.final_averaged_theta[None, :], delimiter=",", fmt="%.17g")

    constants = problem.constants()
    manifest = {
        "config": cfg,
        "dataset_fingerprint": dataset.fingerprint(),
        "library_version": __version__,
        "seeds": seeds,
        "reference_value": ref_value,
        "constants": {"G": constants.lipschitz_G, "D": constants.diameter_D,
                      "M": constants.range_M, "m": constants.num_groups_m,
                      "n": constants.dim_n},
        "wall_clock_seconds": time.time() - t_start,
    }
    (outdir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n",
                                          encoding="utf-8")
    return outdir


def sweep(config_path, outdir) -> dict:
    """Deterministic log-spaced grid over (c_theta, c_q); per-algorithm winner
    minimizes the final averaged objective across the sweep seeds."""
    cfg = load_config(config_path)
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    swcfg = cfg.get("sweep", {})
    n_theta = int(swcfg.get("grid_theta", 3))
    n_q = int(swcfg.get("grid_q", 3))
    if n_theta < 1 or n_q < 1:
        raise ConfigError("sweep grid must have at least one point per axis")
    T = int(swcfg.get("iterations", max(1000, cfg["solver"]["iterations"] // 10)))
    seeds = list(swcfg.get("seeds", [0, 1]))
    c_thetas = np.geomspace(0.1, 5.0, n_theta) if n_theta > 1 else np.array([1.0])
    c_qs = np.geomspace(0.1, 3.0, n_q) if n_q > 1 else np.array([1.0])

    dataset = build_dataset(cfg["dataset"])
    spec = build_spec(cfg["uncertainty"])
    problem = DroProblem(cfg["loss"], float(cfg["radius"]), dataset, spec)
    rows = []
    best = {}
    for algo in cfg["solver"]["algorithms"]:
        for c_t in c_thetas:
            for c_q in c_qs:
                theta_schedule, eta_q = step_sizes(dataset.num_groups, T,
                                                   problem.radius, c_t, c_q)
                finals = []
                for seed in seeds:
                    config = SolverConfig(algorithm=algo, theta_schedule=theta_schedule,
                                          q_step=eta_q, iterations=T,
                                          minibatch=cfg["solver"].get("minibatch", 10),
                                          seed=int(seed))
                    traj = run_solver(problem, config)
                    finals.append(traj.objectives[-1])
                score = float(np.mean(finals))
                rows.append((algo, float(c_t), float(c_q), score))
                if algo not in best or score < best[algo]["objective"]:
                    best[algo] = {"c_theta": float(c_t), "c_q": float(c_q),
                                  "objective": score}
    lines = ["algorithm,c_theta,c_q,mean_final_objective"]
    for algo, c_t, c_q, score in sorted(rows, key=lambda r: (r[0], r[3])):
        lines.append(f"{algo},{FLOAT_FMT % c_t},{FLOAT_FMT % c_q},{FLOAT_FMT % score}")
    (outdir / "sweep_ranking.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    (outdir / "sweep_best.json").write_text(json.dumps(best, indent=2) + "\n",
                                            encoding="utf-8")
    return best


def lb_demo(delta: float, m: int, T: int, algorithm: str, outdir, seed: int = 0) -> dict:
    """Run a solver on the base and perturbed hard instances and report
    achieved gaps against delta/4 plus per-group query counts."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    theta_schedule = StepSchedule(INV_SQRT, 0.5)
    eta_q = float(np.sqrt(np.log(max(m, 2)) / (m * T)))
    config = SolverConfig(algorithm=algorithm, theta_schedule=theta_schedule,
                          q_step=eta_q, iterations=T, minibatch=1, seed=seed)

    base = LowerBoundInstance(m, delta)
    traj0 = run_solver(LowerBoundProblem(base), config)
    # perturb the least-queried non-last group, mirroring the adversary
    star = int(np.argmin(traj0.group_query_counts[: m - 1]))
    perturbed = LowerBoundInstance(m, delta, star_index=star)
    traj1 = run_solver(LowerBoundProblem(perturbed), config)

    def achieved_gap(traj, inst):
        theta = float(np.clip(traj.final_averaged_theta[0] + 0.5, 0.0, 1.0))
        losses = [inst.scale * (inst.delta * (1 - theta) + inst.mu[i]) if i < m - 1
                  else inst.scale * (inst.delta * theta + inst.mu[i]) for i in range(m)]
        return max(losses) - inst.minimax_value()

    report = {
        "delta": delta,
        "separation_target": delta / 4.0,
        "star_index": star,
        "gap_base": achieved_gap(traj0, base),
        "gap_perturbed": achieved_gap(traj1, perturbed),
        "query_counts_base": traj0.group_query_counts.tolist(),
        "query_counts_perturbed": traj1.group_query_counts.tolist(),
        "total_queries": int(traj0.group_query_counts.sum()),
    }
    (outdir / "lb_demo.json").write_text(json.dumps(report, indent=2) + "\n",
                                         encoding="utf-8")
    return report


def gen_data(config_path, out_path):
    """Materialize the configured synthetic dataset as a CSV file."""
    cfg = load_config(config_path)
    dataset = build_dataset(cfg["dataset"])
    n = dataset.dim
    lines = ["group,label," + ",".join(f"f{j}" for j in range(n))]
    for g in range(dataset.num_groups):
        for x, y in zip(dataset.features[g], dataset.labels[g]):
            lines.append(f"{g},{int(y)}," + ",".join(FLOAT_FMT % v for v in x))
    Path(out_path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def eval_theta(config_path, theta_path):
    """Per-group losses and robust objective of a saved parameter vector."""
    cfg = load_config(config_path)
    dataset = build_dataset(cfg["dataset"])
    spec = build_spec(cfg["uncertainty"])
    theta = np.loadtxt(theta_path, delimiter=",").reshape(-1)
    L = evaluation.group_losses(cfg["loss"], theta, dataset)
    return {"group_losses": L.tolist(),
            "robust_objective": evaluation.robust_objective(L, spec)}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="gdro", description=__doc__)
    sub = parser.add_subparsers(dest="verb", required=True)

    p_run = sub.add_parser("run", help="run the configured experiments")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--seed", type=int, default=None, help="override the config seeds")

    p_sweep = sub.add_parser("sweep", help="grid sweep over step-size constants")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--out", required=True)

    p_lb = sub.add_parser("lb-demo", help="hard-instance demonstration")
    p_lb.add_argument("--delta", type=float, required=True)
    p_lb.add_argument("--groups", type=int, required=True)
    p_lb.add_argument("--iterations", type=int, required=True)
    p_lb.add_argument("--algorithm", default="tinf", choices=ALGORITHMS)
    p_lb.add_argument("--out", required=True)
    p_lb.add_argument("--seed", type=int, default=0)

    p_gen = sub.add_parser("gen-data", help="write the synthetic dataset to CSV")
    p_gen.add_argument("--config", required=True)
    p_gen.add_argument("--out", required=True)

    p_eval = sub.add_parser("eval", help="evaluate a saved parameter vector")
    p_eval.add_argument("--config", required=True)
    p_eval.add_argument("--theta", required=True)

    args = parser.parse_args(argv)
    if args.verb == "run":
        out = run_experiment(args.config, args.out, seed_override=args.seed)
        print(f"wrote {out}")
    elif args.verb == "sweep":
        best = sweep(args.config, args.out)
        print(json.dumps(best, indent=2))
    elif args.verb == "lb-demo":
        report = lb_demo(args.delta, args.groups, args.iterations,
                         args.algorithm, args.out, seed=args.seed)
        print(json.dumps(report, indent=2))
    elif args.verb == "gen-data":
        gen_data(args.config, args.out)
        print(f"wrote {args.out}")
    elif args.verb == "eval":
        print(json.dumps(eval_theta(args.config, args.theta), indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
