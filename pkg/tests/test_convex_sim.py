import math

import numpy as np
import pytest

from schedlaw.bounds import BoundCoefficients, bound_averaged, bound_last
from schedlaw.convex_sim import ConvexProblem, ProblemKind, make_problem, sgd_run, sgd_sweep
from schedlaw.errors import ValidationError
from schedlaw.schedule import ScheduleSpec, eval_discrete


def test_deterministic_l1_in_one_dimension():
    p = ConvexProblem("l1_distance", w_star=[0.0], w0=[1.0], G_true=1.0)
    res = sgd_run(p, np.full(5, 0.1))
    np.testing.assert_allclose(res.trace.losses, [0.9, 0.8, 0.7, 0.6, 0.5], atol=1e-12)
    assert p.loss(p.w0) == 1.0


def test_zero_learning_rates_freeze_iterate():
    p = make_problem("l1_distance", d=4, noise_scale=0.2, seed=1)
    res = sgd_run(p, np.zeros(20), seed=3)
    assert np.all(res.trace.losses == p.loss(p.w0))
    assert np.all(res.averaged_trace.losses == p.loss(p.w0))


@pytest.mark.parametrize("kind", list(ProblemKind))
def test_make_problem_construction(kind):
    p = make_problem(kind, d=1, D_target=1.0, G_target=2.0, seed=0)
    assert p.D_true == pytest.approx(1.0)
    assert p.loss(p.w_star) == 0.0
    q = make_problem(kind, d=7, D_target=2.5, G_target=2.0, seed=11)
    assert q.D_true == pytest.approx(2.5)
    r = make_problem(kind, d=7, D_target=2.5, G_target=2.0, seed=11)
    assert np.array_equal(q.w0, r.w0) and np.array_equal(q.w_star, r.w_star)


@pytest.mark.parametrize("kind", list(ProblemKind))
def test_subgradient_norm_bound(kind, rng):
    p = make_problem(kind, d=6, G_target=2.0, seed=2)
    W = p.w_star + rng.normal(scale=3.0, size=(200, 6))
    norms = np.linalg.norm(p.subgradient(W), axis=1)
    assert np.all(norms <= 2.0 + 1e-12)


@pytest.mark.parametrize("kind", list(ProblemKind))
def test_subgradient_inequality(kind, rng):
    # convexity: L(v) >= L(w) + g(w).(v - w)
    p = make_problem(kind, d=5, seed=4)
    W = p.w_star + rng.normal(size=(100, 5))
    V = p.w_star + rng.normal(size=(100, 5))
    g = p.subgradient(W)
    assert np.all(p.loss(V) >= p.loss(W) + np.sum(g * (V - W), axis=1) - 1e-12)


def test_noise_never_needs_projection():
    p = make_problem("l1_distance", d=10, noise_scale=0.3, seed=0)
    res = sgd_sweep(p, np.full(3000, 0.01), seeds=range(5))
    assert res.projections.sum() == 0


def test_seed_isolation():
    p = make_problem("huber_quadratic", d=3, noise_scale=0.5, seed=0)
    lrs = np.full(500, 0.05)
    alone = sgd_run(p, lrs, seed=7).trace.losses
    batch = sgd_sweep(p, lrs, seeds=[1, 7, 9]).result(1).trace.losses
    assert np.array_equal(alone, batch)
    assert not np.array_equal(batch, sgd_sweep(p, lrs, seeds=[1]).last[0])


def test_jensen_chain_per_seed():
    p = make_problem("l1_distance", d=10, noise_scale=0.3, seed=0)
    res = sgd_sweep(p, eval_discrete(ScheduleSpec("cosine_decay", 0.02, 2000)), seeds=range(4))
    assert np.all(res.averaged <= res.weighted + 1e-12)


def test_averaged_mean_below_bound_linear_decay():
    T = 2000
    p = make_problem("l1_distance", d=10, noise_scale=0.3, seed=0)
    lrs = eval_discrete(ScheduleSpec("linear_decay", p.D_true / (p.G_true * math.sqrt(T)), T))
    res = sgd_sweep(p, lrs, seeds=range(20), record_grid=[T])
    coeffs = BoundCoefficients(p.L_star, p.D_true, p.G_true)
    assert res.averaged.mean() <= bound_averaged(coeffs, lrs, T)
    assert res.last.mean() <= bound_last(coeffs, lrs, T)


def test_record_grid_validation():
    p = make_problem(seed=0)
    with pytest.raises(ValidationError):
        sgd_sweep(p, np.full(10, 0.1), [0], record_grid=[5, 3])
    with pytest.raises(ValidationError):
        sgd_sweep(p, np.full(10, 0.1), [0], record_grid=[11])
    with pytest.raises(ValidationError):
        sgd_sweep(p, [-0.1], [0])


def test_problem_validation():
    with pytest.raises(ValidationError):
        ConvexProblem("l1_distance", [0.0], [1.0], G_true=1.0, noise_scale=1.0)
    with pytest.raises(ValidationError):
        ConvexProblem("l1_distance", [0.0, 0.0], [1.0], G_true=1.0)
    with pytest.raises(ValidationError):
        ConvexProblem("nope", [0.0], [1.0], G_true=1.0)


def test_stderr_shapes():
    p = make_problem(seed=0, noise_scale=0.1)
    res = sgd_sweep(p, np.full(100, 0.01), seeds=range(3), record_grid=[10, 100])
    mean, se = res.mean_and_stderr("averaged")
    assert mean.shape == se.shape == (2,)
    assert np.all(se >= 0)
