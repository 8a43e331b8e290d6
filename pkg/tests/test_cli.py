import json

import numpy as np
import pytest

from gdro.cli import (
    ConfigError,
    build_spec,
    eval_theta,
    gen_data,
    lb_demo,
    load_config,
    main,
    run_experiment,
    step_sizes,
    sweep,
    validate_config,
)


def base_config(**overrides):
    cfg = {
        "dataset": {"kind": "synthetic", "m": 3, "n": 4, "points_per_group": 25,
                    "flip_prob": 0.1, "seed": 1},
        "loss": "hinge",
        "radius": 2.0,
        "uncertainty": {"kind": "simplex"},
        "solver": {"algorithms": ["exp3"], "iterations": 300, "minibatch": 4,
                   "seeds": [0, 1], "c_theta": 1.0, "c_q": 1.0},
    }
    cfg.update(overrides)
    return cfg


def write_config(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg), encoding="utf-8")
    return path


def test_config_round_trip(tmp_path):
    cfg = base_config()
    path = write_config(tmp_path, cfg)
    loaded = load_config(path)
    assert loaded == cfg
    # serialize -> parse is identity
    path2 = write_config(tmp_path, loaded, "cfg2.json")
    assert load_config(path2) == loaded


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError, match="unknown config keys"):
        validate_config(base_config(learning_rate=0.1))
    cfg = base_config()
    cfg["solver"]["eta"] = 0.5
    with pytest.raises(ConfigError, match=r"unknown keys in \[solver\]"):
        validate_config(cfg)
    cfg = base_config()
    del cfg["loss"]
    with pytest.raises(ConfigError, match="missing config section"):
        validate_config(cfg)
    with pytest.raises(ConfigError, match="unknown loss"):
        validate_config(base_config(loss="squared"))
    cfg = base_config()
    cfg["solver"]["algorithms"] = ["adam"]
    with pytest.raises(ConfigError, match="unknown algorithm"):
        validate_config(cfg)


def test_build_spec():
    assert build_spec({"kind": "simplex"}).kind == "simplex"
    assert build_spec({"kind": "kset", "p": 0.5}).p == 0.5
    spec = build_spec({"kind": "permutahedron", "alpha": [0.6, 0.4]})
    assert np.allclose(spec.rank_weights, [0.6, 0.4])
    with pytest.raises(ConfigError):
        build_spec({"kind": "ball"})


def test_step_sizes_protocol():
    sched, eta_q = step_sizes(10, 10000, 10.0, 1.0, 1.0)
    assert sched.at(1) == pytest.approx(10.0)
    assert sched.at(4) == pytest.approx(5.0)
    assert eta_q == pytest.approx(np.sqrt(np.log(10) / (10 * 10000)))
    _, eta_one_group = step_sizes(1, 100, 1.0, 1.0, 1.0)
    assert eta_one_group > 0


def test_run_experiment_outputs(tmp_path):
    cfg = base_config()
    cfg["solver"]["algorithms"] = ["exp3", "sagawa"]
    path = write_config(tmp_path, cfg)
    out = run_experiment(path, tmp_path / "out")
    csvs = sorted(p.name for p in out.glob("*_seed*.csv"))
    # 2 algorithms x 2 seeds trajectory files plus final-theta files
    assert len([c for c in csvs if not c.endswith("_theta.csv")]) == 4
    assert len([c for c in csvs if c.endswith("_theta.csv")]) == 4
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"] == cfg
    assert set(manifest["constants"]) == {"G", "D", "M", "m", "n"}
    assert manifest["seeds"] == [0, 1]
    assert len(manifest["dataset_fingerprint"]) == 64
    body = (out / "exp3_seed0.csv").read_text().splitlines()
    assert body[0] == "iteration,objective"
    its = [int(line.split(",")[0]) for line in body[1:]]
    assert its == sorted(its) and its[-1] == 300
    assert all(np.isfinite(float(line.split(",")[1])) for line in body[1:])


def test_run_experiment_with_reference_emits_gap(tmp_path):
    cfg = base_config(reference={"mode": "subgradient", "iterations": 200})
    path = write_config(tmp_path, cfg)
    out = run_experiment(path, tmp_path / "out")
    body = (out / "exp3_seed0.csv").read_text().splitlines()
    assert body[0] == "iteration,objective,gap"
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["reference_value"] is not None


def test_reruns_byte_identical(tmp_path):
    path = write_config(tmp_path, base_config())
    out1 = run_experiment(path, tmp_path / "a")
    out2 = run_experiment(path, tmp_path / "b")
    for p1 in sorted(out1.glob("*.csv")):
        p2 = out2 / p1.name
        assert p1.read_bytes() == p2.read_bytes()


def test_dataset_fingerprint_tracks_config(tmp_path):
    path1 = write_config(tmp_path, base_config(), "c1.json")
    cfg2 = base_config()
    cfg2["dataset"]["seed"] = 2
    path2 = write_config(tmp_path, cfg2, "c2.json")
    m1 = json.loads((run_experiment(path1, tmp_path / "o1") / "manifest.json").read_text())
    m2 = json.loads((run_experiment(path2, tmp_path / "o2") / "manifest.json").read_text())
    assert m1["dataset_fingerprint"] != m2["dataset_fingerprint"]


def test_seed_override(tmp_path):
    path = write_config(tmp_path, base_config())
    out = run_experiment(path, tmp_path / "out", seed_override=7)
    assert (out / "exp3_seed7.csv").exists()
    assert not (out / "exp3_seed0.csv").exists()


def test_sweep_selects_grid_minimum(tmp_path):
    cfg = base_config(sweep={"grid_theta": 2, "grid_q": 2, "iterations": 150,
                             "seeds": [0]})
    cfg["solver"]["algorithms"] = ["exp3", "tinf"]
    path = write_config(tmp_path, cfg)
    best = sweep(path, tmp_path / "sw")
    assert set(best) == {"exp3", "tinf"}
    ranking = (tmp_path / "sw" / "sweep_ranking.csv").read_text().splitlines()
    assert ranking[0] == "algorithm,c_theta,c_q,mean_final_objective"
    assert len(ranking) == 1 + 2 * 4  # 2 algorithms x 2x2 grid
    # the winner is the argmin of its own grid rows
    for algo in ("exp3", "tinf"):
        rows = [r.split(",") for r in ranking[1:] if r.startswith(algo + ",")]
        scores = [float(r[3]) for r in rows]
        assert best[algo]["objective"] == pytest.approx(min(scores), rel=1e-9)


def test_sweep_degenerate_grid(tmp_path):
    cfg = base_config(sweep={"grid_theta": 1, "grid_q": 1, "iterations": 100,
                             "seeds": [0]})
    path = write_config(tmp_path, cfg)
    best = sweep(path, tmp_path / "sw1")
    assert best["exp3"]["c_theta"] == 1.0 and best["exp3"]["c_q"] == 1.0


def test_lb_demo_reports_counts(tmp_path):
    report = lb_demo(0.1, 3, 2000, "exp3", tmp_path / "lb", seed=0)
    assert report["separation_target"] == pytest.approx(0.025)
    assert sum(report["query_counts_base"]) == 2000
    assert sum(report["query_counts_perturbed"]) == 2000
    assert 0 <= report["star_index"] < 2
    assert (tmp_path / "lb" / "lb_demo.json").exists()


def test_gen_data_and_eval(tmp_path):
    path = write_config(tmp_path, base_config())
    out_csv = tmp_path / "data.csv"
    gen_data(path, out_csv)
    lines = out_csv.read_text().splitlines()
    assert lines[0] == "group,label,f0,f1,f2,f3"
    assert len(lines) == 1 + 3 * 25
    out = run_experiment(path, tmp_path / "runout")
    res = eval_theta(path, out / "exp3_seed0_theta.csv")
    assert len(res["group_losses"]) == 3
    assert res["robust_objective"] == pytest.approx(max(res["group_losses"]))


def test_main_entry_point(tmp_path, capsys):
    path = write_config(tmp_path, base_config())
    assert main(["run", "--config", str(path), "--out", str(tmp_path / "m1")]) == 0
    assert "m1" in capsys.readouterr().out
    assert main(["eval", "--config", str(path),
                 "--theta", str(tmp_path / "m1" / "exp3_seed0_theta.csv")]) == 0
    assert "robust_objective" in capsys.readouterr().out
