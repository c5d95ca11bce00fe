"""Denoiser preconditioning, DSM gradients, and the Euler PF-ODE step."""

import numpy as np
import pytest

from ctlab import rng as crng
from ctlab.data import GaussianMixture, make_setting
from ctlab.errors import ConfigError, NumericError, StructuralError
from ctlab.nn import NetworkSpec
from ctlab.schedule import build_schedule
from ctlab.score import (ScoreModel, denoiser, dsm_loss, euler_pfode_update,
                         make_score_fn, model_score, pfode_solve, train_score)

from conftest import central_diff, rel_err


def make_model(rng, sigma_data=1.3):
    spec = NetworkSpec(input_dim=2, hidden_dim=8, depth=2, output_dim=2)
    params = rng.normal(scale=0.5, size=spec.param_count)
    schedule = build_schedule(0.002, 80.0, 7.0, 12)
    return ScoreModel(spec, params, sigma_data, schedule)


def test_preconditioners_closed_form(rng):
    model = make_model(rng, sigma_data=2.0)
    sigma = np.array([0.5, 3.0])
    c_in, c_skip, c_out = model.preconditioners(sigma)
    assert np.allclose(c_in, 1.0 / np.sqrt(sigma ** 2 + 4.0), rtol=1e-15)
    assert np.allclose(c_skip, 4.0 / (sigma ** 2 + 4.0), rtol=1e-15)
    assert np.allclose(c_out, 2.0 * sigma / np.sqrt(sigma ** 2 + 4.0), rtol=1e-15)
    # the three satisfy c_skip + c_out * c_in * sigma / sigma_data = 1
    assert np.allclose(c_skip + c_out * c_in * sigma / 2.0, 1.0, rtol=1e-14)


def test_denoiser_combines_preconditioned_network(rng):
    model = make_model(rng)
    y = rng.normal(size=(5, 2))
    sigma = np.exp(rng.uniform(-2, 2, size=5))
    d, _ = denoiser(model, y, sigma)
    from ctlab.nn import forward
    c_in, c_skip, c_out = model.preconditioners(sigma)
    raw, _ = forward(model.spec, model.params, c_in[:, None] * y, sigma)
    assert np.array_equal(d, c_skip[:, None] * y + c_out[:, None] * raw)


def test_model_score_is_denoiser_residual_over_variance(rng):
    model = make_model(rng)
    y = rng.normal(size=(4, 2))
    sigma = np.full(4, 0.7)
    s = model_score(model, y, sigma)
    d, _ = denoiser(model, y, sigma)
    assert np.allclose(s, (d - y) / 0.49, rtol=1e-14)


def test_dsm_gradients_match_finite_differences(rng):
    for _ in range(6):
        model = make_model(rng, sigma_data=float(rng.uniform(0.5, 2.0)))
        n = int(rng.integers(2, 6))
        x = rng.normal(size=(n, 2))
        z = rng.normal(size=(n, 2))
        sigma = np.exp(rng.uniform(-2, 1.5, size=n))

        def loss_at(p):
            val, _ = dsm_loss(model.with_params(p), x, z, sigma, want_grads=False)
            return val

        _, g = dsm_loss(model, x, z, sigma)
        fd = central_diff(loss_at, model.params.copy(), eps=5e-6)
        assert rel_err(g, fd) < 1e-6


def test_dsm_loss_is_zero_for_perfect_denoiser():
    # an oracle that returns x exactly gives zero loss; emulate by driving
    # the residual term with a zero-output network and x = 0 inputs
    rng = np.random.default_rng(0)
    model = make_model(rng)
    model.params[:] = 0.0  # raw network output is 0 -> D(y) = c_skip * y
    x = np.zeros((8, 2))
    z = np.zeros((8, 2))
    sigma = np.full(8, 0.5)
    loss, _ = dsm_loss(model, x, z, sigma, want_grads=False)
    assert loss == 0.0


def test_dsm_validation(rng):
    model = make_model(rng)
    with pytest.raises(StructuralError):
        dsm_loss(model, np.zeros((3, 2)), np.zeros((4, 2)), np.full(3, 0.5))
    with pytest.raises(StructuralError):
        dsm_loss(model, np.zeros((3, 2)), np.zeros((3, 2)), np.full(4, 0.5))


def test_euler_update_closed_form_single_gaussian():
    # standard normal data: score(y, sigma) = -y / (1 + sigma^2), so the
    # update contracts x_next toward the origin by a known factor
    dist = GaussianMixture.isotropic(np.zeros((1, 2)), 1.0)
    fn = make_score_fn(dist)
    x_next = np.array([[2.0, -4.0]])
    si, sn = 0.5, 1.0
    out = euler_pfode_update(fn, x_next, si, sn)
    factor = 1.0 + (si - sn) * sn / (1.0 + sn ** 2)
    assert np.allclose(out, factor * x_next, rtol=1e-14)


def test_euler_update_identities():
    fn = lambda y, s: np.zeros_like(y)
    x = np.array([[1.5, -2.0]])
    # zero score: the state passes through unchanged
    assert np.array_equal(euler_pfode_update(fn, x, 0.2, 0.9), x)
    # equal noise levels: exact identity, score never evaluated
    def explode(y, s):
        raise AssertionError("score must not be called")
    out = euler_pfode_update(explode, x, 0.7, 0.7)
    assert np.array_equal(out, x)
    assert out is not x


def test_euler_update_is_linear_in_the_score():
    base = lambda y, s: np.ones_like(y)
    x = np.zeros((1, 2))
    out1 = euler_pfode_update(base, x, 0.3, 1.0)
    out2 = euler_pfode_update(lambda y, s: 2 * base(y, s), x, 0.3, 1.0)
    assert np.allclose(out2, 2 * out1, rtol=0, atol=0)


def test_pfode_solve_pulls_noise_toward_the_data_scale():
    # integrating the analytic score of a standard normal from sigma_max
    # down to sigma_min must shrink the marginal spread toward unit scale
    dist = GaussianMixture.isotropic(np.zeros((1, 2)), 1.0)
    fn = make_score_fn(dist)
    schedule = build_schedule(0.01, 5.0, 3.0, 60)
    rng = np.random.default_rng(8)
    z = 5.0 * rng.standard_normal((2000, 2))
    x0, traj = pfode_solve(fn, z, schedule, return_trajectory=True)
    assert traj.shape == (61, 2000, 2)
    # the exact PF-ODE maps N(0, (1+s^2) I) marginals onto one another
    assert abs(x0.std() - 1.0) < 0.05
    assert np.array_equal(traj[0], z)


def test_pfode_solve_divergence_guard():
    schedule = build_schedule(0.01, 5.0, 3.0, 10)
    fn = lambda y, s: -1e9 * np.ones_like(y)
    with pytest.raises(NumericError) as exc:
        pfode_solve(fn, np.ones((1, 2)), schedule)
    assert "index" in exc.value.context


def test_make_score_fn_sources(rng):
    model = make_model(rng)
    y = rng.normal(size=(3, 2))
    fn_model = make_score_fn(model)
    assert np.array_equal(fn_model(y, 0.8), model_score(model, y, np.full(3, 0.8)))
    dist = GaussianMixture.isotropic(np.zeros((1, 2)), 1.0)
    fn_dist = make_score_fn(dist)
    assert np.array_equal(fn_dist(y, 0.8), dist.perturbed_score(y, 0.8))
    fn_callable = make_score_fn(lambda a, b: a)
    assert fn_callable is not None
    with pytest.raises(ConfigError):
        make_score_fn(42)


@pytest.mark.slow
def test_trained_score_approaches_analytic_score():
    setting = make_setting("1m-2m", n_samples=4000)
    schedule = build_schedule(0.001, 1.0, 3.0, 30)
    spec = NetworkSpec(input_dim=2, hidden_dim=64, depth=3, output_dim=2)
    streams = crng.make_streams(123)
    model = train_score(setting, schedule, spec, n_steps=1500, batch_size=256,
                        lr=1e-3, streams=streams)
    rng = np.random.default_rng(5)
    x = setting.data_dist.sample(512, rng)
    for sigma in (0.1, 0.5):
        y = x + sigma * rng.standard_normal(x.shape)
        learned = model_score(model, y, np.full(512, sigma))
        exact = setting.data_dist.perturbed_score(y, sigma)
        err = np.linalg.norm(learned - exact, axis=1)
        scale = np.linalg.norm(exact, axis=1).mean()
        assert err.mean() < 0.35 * max(scale, 1.0)
