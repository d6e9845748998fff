"""Factored gradient machinery: identities, calibration, and the step.

The algebraic identities are checked against directly expanded forms,
the factor gradients against finite differences of the composed
objective, and the first-order loss prediction against realized loss
changes at small learning rates.
"""

import math

import numpy as np
import pytest

from lowrankgrad.errors import ShapeError
from lowrankgrad.lowrank import (
    FactorPair,
    ProjectionMethod,
    effective_gradient,
    factor_gradients,
    full_rank_loss_delta,
    low_rank_step,
    predicted_loss_delta,
    sample_random_factors,
    svd_factors,
)
from lowrankgrad.matrix import Matrix, identity, zeros
from lowrankgrad.optimizers import OptimizerKind, OptimizerSpec, compute_delta, init_state
from lowrankgrad.rng import Rng
from lowrankgrad.toy import sample_problem


def random_matrix(rng, rows, cols, scale=1.0):
    return Matrix(rng.normal(rows * cols, stddev=scale).reshape(rows, cols))


def gd_spec(lr):
    return OptimizerSpec(kind=OptimizerKind.GRADIENT_DESCENT, learning_rate=lr)


def random_states(spec, m, n, r):
    return init_state(spec, m, r), init_state(spec, n, r)


# ---------------------------------------------------------------------------
# factor construction


def test_factor_pair_validation():
    u, v = zeros(4, 2), zeros(3, 2)
    FactorPair(u=u, v=v, rank=2)
    with pytest.raises(ShapeError):
        FactorPair(u=u, v=v, rank=0)
    with pytest.raises(ShapeError):
        FactorPair(u=u, v=zeros(3, 1), rank=2)
    with pytest.raises(ShapeError):
        FactorPair(u=zeros(1, 2), v=v, rank=2)  # rank above min dimension


def test_sample_random_factors_replays_the_stream():
    # one contiguous draw: u's entries first in row-major order, then v's,
    # scaled to 1/sqrt(2m) and 1/sqrt(2n) per entry
    m, n, r = 6, 4, 2
    pair = sample_random_factors(Rng(9), m, n, r)
    z = Rng(9).normal((m + n) * r)
    want_u = z[: m * r].reshape(m, r) * (1.0 / math.sqrt(2.0 * m))
    want_v = z[m * r :].reshape(n, r) * (1.0 / math.sqrt(2.0 * n))
    assert np.array_equal(pair.u.array, want_u)
    assert np.array_equal(pair.v.array, want_v)
    assert pair.rank == 2


def test_sample_random_factors_calibration():
    # per-entry variance 1/(2m) makes the columns of u half-unit vectors
    # on average: diag(u^T u) concentrates near 1/2
    m, n, r = 400, 300, 4
    diag_sum = np.zeros(r)
    off_sum = 0.0
    trials = 60
    for seed in range(trials):
        pair = sample_random_factors(Rng(seed), m, n, r)
        gram = pair.u.array.T @ pair.u.array
        diag_sum += np.diag(gram)
        off_sum += gram[0, 1]
    diag_mean = diag_sum / trials
    assert np.all(diag_mean > 0.45)
    assert np.all(diag_mean < 0.55)
    assert abs(off_sum / trials) < 0.05


def test_svd_factors_effective_gradient_is_best_approximation():
    g = Matrix(np.diag([5.0, 3.0, 1.0]))
    pair = svd_factors(g, 1)
    eff = effective_gradient(g, pair)
    np.testing.assert_allclose(eff.array, np.diag([5.0, 0.0, 0.0]), atol=1e-10)


def test_svd_factors_full_subspace_recovers_the_gradient():
    rng = Rng(13)
    g = random_matrix(rng, 7, 5)
    pair = svd_factors(g, 5)
    np.testing.assert_allclose(effective_gradient(g, pair).array, g.array, atol=1e-8)


def test_svd_factors_random_case_matches_truncation():
    rng = Rng(14)
    for _ in range(5):
        g = random_matrix(rng, 9, 6)
        r = 2
        u_, s_, vt_ = np.linalg.svd(g.array, full_matrices=False)
        best = (u_[:, :r] * s_[:r]) @ vt_[:r]
        eff = effective_gradient(g, svd_factors(g, r))
        np.testing.assert_allclose(eff.array, best, atol=1e-10)


def test_svd_factors_rank_bounds():
    g = zeros(4, 6)
    with pytest.raises(ShapeError):
        svd_factors(g, 0)
    with pytest.raises(ShapeError):
        svd_factors(g, 5)


# ---------------------------------------------------------------------------
# gradients and identities


def test_factor_gradients_shapes_and_values():
    rng = Rng(15)
    g = random_matrix(rng, 6, 4)
    pair = sample_random_factors(rng, 6, 4, 3)
    grad_u, grad_v = factor_gradients(g, pair)
    assert grad_u.shape == (6, 3)
    assert grad_v.shape == (4, 3)
    np.testing.assert_allclose(grad_u.array, g.array @ pair.v.array, rtol=1e-15)
    np.testing.assert_allclose(grad_v.array, g.array.T @ pair.u.array, rtol=1e-15)


def test_factor_gradients_match_finite_differences():
    # d/dU L(W + U V^T) must equal (grad L) V, and likewise for V
    rng = Rng(16)
    d, r = 8, 2
    problem, _ = sample_problem(rng, d)
    w_base = random_matrix(rng, d, d, scale=0.1)
    pair = sample_random_factors(rng, d, d, r)
    u, v = pair.u.array, pair.v.array

    def composed_loss(u_arr, v_arr):
        return problem.loss(Matrix(w_base.array + u_arr @ v_arr.T))

    g = problem.loss_gradient(Matrix(w_base.array + u @ v.T))
    grad_u, grad_v = factor_gradients(g, pair)
    h = 1e-6
    for i, j in ((0, 0), (3, 1), (7, 0)):
        bumped = u.copy()
        bumped[i, j] += h
        up = composed_loss(bumped, v)
        bumped[i, j] -= 2.0 * h
        down = composed_loss(bumped, v)
        fd = (up - down) / (2.0 * h)
        assert abs(fd - grad_u.array[i, j]) <= 1e-5 * max(abs(grad_u.array[i, j]), 1e-6)
    for i, j in ((0, 1), (5, 0)):
        bumped = v.copy()
        bumped[i, j] += h
        up = composed_loss(u, bumped)
        bumped[i, j] -= 2.0 * h
        down = composed_loss(u, bumped)
        fd = (up - down) / (2.0 * h)
        assert abs(fd - grad_v.array[i, j]) <= 1e-5 * max(abs(grad_v.array[i, j]), 1e-6)


def test_effective_gradient_identity():
    # u (g^T u)^T + (g v) v^T == u u^T g + g v v^T
    rng = Rng(17)
    for _ in range(50):
        m, n = int(rng.uniform(1)[0] * 10) + 2, int(rng.uniform(1)[0] * 10) + 2
        r = int(rng.uniform(1)[0] * min(m, n)) + 1
        g = random_matrix(rng, m, n)
        pair = sample_random_factors(rng, m, n, r)
        grad_u, grad_v = factor_gradients(g, pair)
        expanded = pair.u.array @ grad_v.array.T + grad_u.array @ pair.v.array.T
        direct = effective_gradient(g, pair).array
        scale = max(np.abs(direct).max(), 1e-300)
        assert np.abs(expanded - direct).max() <= 1e-12 * scale


def test_effective_gradient_zero_factors():
    g = Matrix([[1.0, 2.0], [3.0, 4.0]])
    pair = FactorPair(u=zeros(2, 1), v=zeros(2, 1), rank=1)
    assert np.all(effective_gradient(g, pair).array == 0.0)
    gu, gv = factor_gradients(g, pair)
    assert np.all(gu.array == 0.0)
    assert np.all(gv.array == 0.0)


# ---------------------------------------------------------------------------
# loss-change predictions


def test_predicted_loss_delta_matches_gram_norms():
    rng = Rng(18)
    for _ in range(50):
        g = random_matrix(rng, 7, 5, scale=10.0 ** (rng.uniform(1)[0] * 4 - 2))
        pair = sample_random_factors(rng, 7, 5, 3)
        lr = 0.25
        got = predicted_loss_delta(g, pair, lr)
        gtu = g.array.T @ pair.u.array
        gv = g.array @ pair.v.array
        want = -lr * (float(np.sum(gtu * gtu)) + float(np.sum(gv * gv)))
        assert abs(got - want) <= 1e-12 * abs(want)
        assert got <= 0.0


def test_predicted_loss_delta_zero_cases():
    g = Matrix([[1.0, 2.0], [3.0, 4.0]])
    silent = FactorPair(u=zeros(2, 1), v=zeros(2, 1), rank=1)
    assert predicted_loss_delta(g, silent, 0.1) == 0.0
    pair = sample_random_factors(Rng(19), 2, 2, 1)
    assert predicted_loss_delta(zeros(2, 2), pair, 0.1) == 0.0


def test_predicted_loss_delta_validates_learning_rate():
    g = Matrix([[1.0]])
    pair = FactorPair(u=Matrix([[1.0]]), v=Matrix([[1.0]]), rank=1)
    with pytest.raises(ValueError):
        predicted_loss_delta(g, pair, 0.0)
    with pytest.raises(ValueError):
        predicted_loss_delta(g, pair, -0.1)


def test_full_rank_loss_delta():
    assert full_rank_loss_delta(identity(3), 1.0) == -3.0
    rng = Rng(20)
    g = random_matrix(rng, 5, 4)
    want = -0.3 * float(np.sum(g.array * g.array))
    assert abs(full_rank_loss_delta(g, 0.3) - want) <= 1e-13 * abs(want)
    with pytest.raises(ValueError):
        full_rank_loss_delta(g, 0.0)


def test_projected_prediction_never_beats_full_rank():
    # with calibrated random factors the projected descent prediction is a
    # strict contraction of the full-rank one at these sizes
    rng = Rng(21)
    ratios = []
    for seed in range(100):
        g = random_matrix(Rng(1000 + seed), 60, 60)
        pair = sample_random_factors(Rng(2000 + seed), 60, 60, 5)
        projected = predicted_loss_delta(g, pair, 0.1)
        full = full_rank_loss_delta(g, 0.1)
        ratios.append(projected / full)  # both negative
        assert projected > full  # smaller magnitude
        assert projected < 0.0
    mean_ratio = sum(ratios) / len(ratios)
    assert 0.0 < mean_ratio < 0.5


def test_prediction_is_first_order_accurate():
    # realized loss change approaches the prediction as lr -> 0, with the
    # gap shrinking like lr^2
    rng = Rng(22)
    d, r = 10, 3
    problem, _ = sample_problem(rng, d)
    w = random_matrix(rng, d, d, scale=0.3)
    g = problem.loss_gradient(w)
    pair = sample_random_factors(rng, d, d, r)
    gaps = []
    for lr in (1e-3, 1e-4, 1e-5):
        spec = gd_spec(lr)
        new_w, _, _, report = low_rank_step(
            w, g, ProjectionMethod.RANDOM, r, spec, *random_states(spec, d, d, r),
            rng=Rng(123),
        )
        realized = problem.loss(new_w) - problem.loss(w)
        assert realized < 0.0
        ratio = realized / report.predicted_loss_delta
        if lr == 1e-5:
            assert 0.99 < ratio < 1.01
        gaps.append(abs(realized - report.predicted_loss_delta))
    # quartic-to-quadratic window keeps the check robust to cancellation
    assert 25.0 < gaps[0] / gaps[1] < 400.0
    assert 25.0 < gaps[1] / gaps[2] < 400.0


# ---------------------------------------------------------------------------
# the step itself


def test_low_rank_step_requires_a_projection():
    spec = gd_spec(0.1)
    w = zeros(3, 3)
    g = Matrix(np.eye(3))
    su, sv = random_states(spec, 3, 3, 2)
    with pytest.raises(ValueError):
        low_rank_step(w, g, ProjectionMethod.NONE, 2, spec, su, sv)
    with pytest.raises(ValueError):
        low_rank_step(w, g, ProjectionMethod.RANDOM, 2, spec, su, sv)  # no rng


def test_low_rank_step_update_composition():
    # new_w - w must equal u dv^T + du v^T + du dv^T with du, dv produced
    # by the optimizer on the factor gradients
    rng = Rng(23)
    m = n = 6
    r = 2
    w = random_matrix(rng, m, n)
    g = random_matrix(rng, m, n)
    spec = gd_spec(0.05)
    su, sv = random_states(spec, m, n, r)
    new_w, _, _, report = low_rank_step(
        w, g, ProjectionMethod.RANDOM, r, spec, su, sv, rng=Rng(77)
    )
    pair = report.factors
    grad_u, grad_v = factor_gradients(g, pair)
    du, _ = compute_delta(spec, init_state(spec, m, r), grad_u)
    dv, _ = compute_delta(spec, init_state(spec, n, r), grad_v)
    want = (
        pair.u.array @ dv.array.T
        + du.array @ pair.v.array.T
        + du.array @ dv.array.T
    )
    np.testing.assert_allclose(new_w.array - w.array, want, rtol=0, atol=1e-15)
    np.testing.assert_allclose(report.delta_w.array, want, rtol=0, atol=1e-15)


def test_update_composition_equals_refactored_product():
    # u dv^T + du v^T + du dv^T == (u + du)(v + dv)^T - u v^T
    rng = Rng(24)
    worst = 0.0
    for _ in range(200):
        m = int(rng.uniform(1)[0] * 8) + 2
        n = int(rng.uniform(1)[0] * 8) + 2
        r = int(rng.uniform(1)[0] * min(m, n)) + 1
        pair = sample_random_factors(rng, m, n, r)
        step_scale = 10.0 ** (-3.0 * rng.uniform(1)[0])
        du = rng.normal(m * r, stddev=step_scale).reshape(m, r)
        dv = rng.normal(n * r, stddev=step_scale).reshape(n, r)
        u, v = pair.u.array, pair.v.array
        expanded = u @ dv.T + du @ v.T + du @ dv.T
        refactored = (u + du) @ (v + dv).T - u @ v.T
        scale = max(np.abs(expanded).max(), 1e-300)
        worst = max(worst, np.abs(expanded - refactored).max() / scale)
    assert worst <= 1e-12


def test_low_rank_step_zero_gradient_is_a_fixed_point():
    rng = Rng(25)
    w = random_matrix(rng, 5, 5)
    spec = gd_spec(0.1)
    su, sv = random_states(spec, 5, 5, 2)
    new_w, _, _, report = low_rank_step(
        w, zeros(5, 5), ProjectionMethod.RANDOM, 2, spec, su, sv, rng=Rng(3)
    )
    assert np.array_equal(new_w.array, w.array)
    assert report.predicted_loss_delta == 0.0


def test_low_rank_step_svd_is_deterministic():
    rng = Rng(26)
    w = random_matrix(rng, 6, 6)
    g = random_matrix(rng, 6, 6)
    spec = gd_spec(0.05)
    outs = []
    for _ in range(2):
        su, sv = random_states(spec, 6, 6, 3)
        new_w, _, _, _ = low_rank_step(w, g, ProjectionMethod.SVD, 3, spec, su, sv)
        outs.append(new_w.array)
    assert np.array_equal(outs[0], outs[1])


def test_low_rank_step_report_is_consistent():
    rng = Rng(27)
    w = random_matrix(rng, 6, 4)
    g = random_matrix(rng, 6, 4)
    spec = gd_spec(0.05)
    su, sv = random_states(spec, 6, 4, 2)
    _, _, _, report = low_rank_step(
        w, g, ProjectionMethod.RANDOM, 2, spec, su, sv, rng=Rng(11)
    )
    want_pred = predicted_loss_delta(g, report.factors, 0.05)
    assert abs(report.predicted_loss_delta - want_pred) <= 1e-13 * abs(want_pred)
    want_eff = effective_gradient(g, report.factors)
    assert np.array_equal(report.effective_gradient.array, want_eff.array)
    assert report.factors.u.shape == (6, 2)
    assert report.factors.v.shape == (4, 2)


def test_low_rank_step_momentum_state_persists():
    # the same gradient twice under momentum moves farther the second time
    rng = Rng(28)
    w = random_matrix(rng, 5, 5)
    g = random_matrix(rng, 5, 5)
    spec = OptimizerSpec(kind=OptimizerKind.MOMENTUM, learning_rate=0.05,
                         momentum_coeff=0.9)
    su, sv = random_states(spec, 5, 5, 2)
    w1, su, sv, r1 = low_rank_step(w, g, ProjectionMethod.SVD, 2, spec, su, sv)
    w2, su, sv, r2 = low_rank_step(w1, g, ProjectionMethod.SVD, 2, spec, su, sv)
    first = np.abs(w1.array - w.array).sum()
    second = np.abs(w2.array - w1.array).sum()
    assert second > 1.5 * first
    assert np.abs(su.velocity.array).sum() > 0.0


def test_low_rank_step_rank_bounds():
    spec = gd_spec(0.1)
    w = zeros(4, 4)
    g = Matrix(np.eye(4))
    su, sv = random_states(spec, 4, 4, 5)
    with pytest.raises(ShapeError):
        low_rank_step(w, g, ProjectionMethod.SVD, 5, spec, su, sv)
    with pytest.raises(ShapeError):
        low_rank_step(w, g, ProjectionMethod.RANDOM, 5, spec, su, sv, rng=Rng(0))
