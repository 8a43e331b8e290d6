import numpy as np
import pytest

from gdro.problem import (
    DataPoint,
    DimensionMismatch,
    ProblemConstants,
    UncertaintySetSpec,
    batch_loss_grad,
    batch_losses,
    eval_loss,
    eval_loss_grad,
    lipschitz_bound,
    loss_range_bound,
    project_ball,
)


def test_loss_at_origin():
    p = DataPoint(np.array([0.3, -1.2]), 1.0)
    assert eval_loss("hinge", np.zeros(2), p) == 1.0
    assert eval_loss("logistic", np.zeros(2), p) == pytest.approx(np.log(2.0), abs=1e-12)


def test_hinge_inactive_region():
    p = DataPoint(np.array([1.0, 0.0]), 1.0)
    theta = np.array([2.0, 0.0])
    assert eval_loss("hinge", theta, p) == 0.0
    assert np.array_equal(eval_loss_grad("hinge", theta, p), np.zeros(2))


def test_logistic_grad_closed_form():
    p = DataPoint(np.array([1.0, 0.0]), 1.0)
    g = eval_loss_grad("logistic", np.zeros(2), p)
    assert np.allclose(g, [-0.5, 0.0], atol=1e-12)
    p2 = DataPoint(np.array([1.0, 0.0]), -1.0)
    g2 = eval_loss_grad("logistic", np.array([1.0, 0.0]), p2)
    sigma1 = 1.0 / (1.0 + np.exp(-1.0))
    assert np.allclose(g2, [sigma1, 0.0], atol=1e-9)


def test_hinge_kink_subgradient():
    # margin exactly 1: the informative subgradient -b*a is returned
    p = DataPoint(np.array([1.0, 0.0]), 1.0)
    g = eval_loss_grad("hinge", np.array([1.0, 0.0]), p)
    assert np.array_equal(g, [-1.0, -0.0])


def test_grad_matches_finite_differences():
    rng = np.random.default_rng(0)
    h = 1e-6
    for _ in range(100):
        n = int(rng.integers(1, 6))
        theta = rng.normal(size=n)
        a = rng.normal(size=n)
        b = 1.0 if rng.random() < 0.5 else -1.0
        point = DataPoint(a, b)
        for kind in ("logistic", "hinge"):
            if kind == "hinge" and abs(b * (a @ theta) - 1.0) < 1e-3:
                continue  # stay away from the kink
            g = eval_loss_grad(kind, theta, point)
            fd = np.empty(n)
            for j in range(n):
                e = np.zeros(n)
                e[j] = h
                fd[j] = (eval_loss(kind, theta + e, point)
                         - eval_loss(kind, theta - e, point)) / (2 * h)
            assert np.allclose(g, fd, atol=1e-5, rtol=1e-5)


def test_dimension_mismatch_raises():
    p = DataPoint(np.array([1.0, 2.0]), 1.0)
    with pytest.raises(DimensionMismatch):
        eval_loss("hinge", np.zeros(3), p)
    with pytest.raises(DimensionMismatch):
        eval_loss_grad("logistic", np.zeros(3), p)


def test_batch_matches_pointwise():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(7, 4))
    y = np.where(rng.random(7) < 0.5, 1.0, -1.0)
    theta = rng.normal(size=4)
    for kind in ("logistic", "hinge"):
        loss, grad = batch_loss_grad(kind, theta, X, y)
        pts = [DataPoint(X[i], y[i]) for i in range(7)]
        assert loss == pytest.approx(np.mean([eval_loss(kind, theta, p) for p in pts]), abs=1e-12)
        assert np.allclose(grad, np.mean([eval_loss_grad(kind, theta, p) for p in pts], axis=0),
                           atol=1e-12)
        assert np.allclose(batch_losses(kind, theta, X, y),
                           [eval_loss(kind, theta, p) for p in pts], atol=1e-12)


def test_project_ball():
    assert np.array_equal(project_ball(np.array([3.0, 4.0]), 10.0), [3.0, 4.0])
    out = project_ball(np.array([6.0, 8.0]), 5.0)
    assert np.allclose(out, [3.0, 4.0], atol=1e-12)
    assert np.linalg.norm(out) == pytest.approx(5.0, abs=1e-12)
    assert np.array_equal(project_ball(np.zeros(3), 2.0), np.zeros(3))


def test_project_ball_idempotent_bitwise():
    rng = np.random.default_rng(2)
    for _ in range(1000):
        x = rng.normal(size=3) * rng.uniform(0, 20)
        once = project_ball(x, 5.0)
        assert np.array_equal(project_ball(once, 5.0), once)


def test_project_ball_rejects_bad_input():
    with pytest.raises(ValueError):
        project_ball(np.array([np.nan, 0.0]), 1.0)
    with pytest.raises(ValueError):
        project_ball(np.zeros(2), 0.0)


def test_range_bound_dominates_sampled_losses():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(200, 5))
    y = np.where(rng.random(200) < 0.5, 1.0, -1.0)
    radius = 3.0
    for kind in ("logistic", "hinge"):
        M = loss_range_bound(kind, radius, X)
        for _ in range(20):
            theta = rng.normal(size=5)
            theta = theta / np.linalg.norm(theta) * radius
            assert np.all(batch_losses(kind, theta, X, y) <= M + 1e-12)


def test_lipschitz_bound_dominates_grad_norms():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(50, 4))
    y = np.where(rng.random(50) < 0.5, 1.0, -1.0)
    G = lipschitz_bound(X)
    for _ in range(20):
        theta = rng.normal(size=4) * 3
        for i in range(50):
            g = eval_loss_grad("hinge", theta, DataPoint(X[i], y[i]))
            assert np.linalg.norm(g) <= G + 1e-12


def test_constants_validation():
    with pytest.raises(ValueError):
        ProblemConstants(-1.0, 1.0, 1.0, 2, 2)
    with pytest.raises(ValueError):
        ProblemConstants(1.0, 0.0, 1.0, 2, 2)
    c = ProblemConstants(1.0, 2.0, 3.0, 4, 5)
    assert c.num_groups_m == 4


def test_uncertainty_spec_validation():
    assert UncertaintySetSpec.simplex().kind == "simplex"
    with pytest.raises(ValueError):
        UncertaintySetSpec.kset(0.0)
    with pytest.raises(ValueError):
        UncertaintySetSpec.kset(1.5)
    with pytest.raises(ValueError):
        UncertaintySetSpec.permutahedron([0.2, 0.5, 0.3])  # not nonincreasing
    with pytest.raises(ValueError):
        UncertaintySetSpec.permutahedron([0.6, 0.3])  # does not sum to 1


def test_kset_cap_and_rank_weights():
    spec = UncertaintySetSpec.kset(0.5)
    assert spec.cap(4) == pytest.approx(0.5)
    assert np.allclose(spec.rank_weights_for(4), [0.5, 0.5, 0.0, 0.0])
    with pytest.raises(ValueError):
        UncertaintySetSpec.kset(0.4).rank_weights_for(4)  # p*m = 1.6 non-integral
    a = UncertaintySetSpec.simplex().rank_weights_for(3)
    assert np.allclose(a, [1.0, 0.0, 0.0])
