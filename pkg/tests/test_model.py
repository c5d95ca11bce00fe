"""Consistency head boundary behavior and distance functions."""

import numpy as np
import pytest

from ctlab.errors import ConfigError, StructuralError, UsageError
from ctlab.model import (DistanceFn, ConsistencyModel, consistency_output,
                         distance, distance_vjp)
from ctlab.nn import NetworkSpec, init_params
from ctlab.schedule import build_schedule

from conftest import central_diff, rel_err


def make_model(rng, sigma_data=1.5, randomize=True):
    spec = NetworkSpec(input_dim=2, hidden_dim=8, depth=2, output_dim=2)
    params = init_params(spec, rng)
    if randomize:
        params[:] = rng.normal(scale=0.7, size=params.shape)
    schedule = build_schedule(0.002, 80.0, 7.0, 16)
    return ConsistencyModel(spec, params, sigma_data, schedule)


def test_identity_at_sigma_min_for_random_parameters(rng):
    for _ in range(10):
        model = make_model(rng, sigma_data=float(rng.uniform(0.3, 3.0)))
        x = rng.normal(scale=3.0, size=(9, 2))
        sig = np.full(9, model.schedule.sigma_min)
        y, _ = consistency_output(model, x, sig)
        assert np.max(np.abs(y - x)) <= 1e-12


def test_skip_and_out_coefficients_at_boundary(rng):
    model = make_model(rng)
    lo = model.schedule.sigma_min
    assert model.c_skip(lo) == 1.0
    assert model.c_out(lo) == 0.0
    # both decay/grow monotonically away from the boundary
    sig = np.linspace(lo, model.schedule.sigma_max, 64)
    assert np.all(np.diff(model.c_skip(sig)) < 0)
    assert np.all(np.diff(model.c_out(sig)) > 0)


def test_output_combines_skip_and_residual(rng):
    model = make_model(rng)
    x = rng.normal(size=(5, 2))
    sig = np.exp(rng.uniform(np.log(0.002), np.log(80.0), size=5))
    y, _ = consistency_output(model, x, sig)
    from ctlab.nn import forward
    raw, _ = forward(model.spec, model.params, x, sig)
    ref = model.c_skip(sig)[:, None] * x + model.c_out(sig)[:, None] * raw
    assert np.array_equal(y, ref)


def test_sigma_range_is_enforced(rng):
    model = make_model(rng)
    x = np.zeros((2, 2))
    with pytest.raises(UsageError):
        consistency_output(model, x, np.array([0.001, 1.0]))
    with pytest.raises(UsageError):
        consistency_output(model, x, np.array([1.0, 81.0]))


def test_model_validation(rng):
    spec = NetworkSpec(input_dim=2, hidden_dim=4, depth=1, output_dim=2)
    schedule = build_schedule(0.002, 80.0, 7.0, 8)
    with pytest.raises(ConfigError):
        ConsistencyModel(spec, np.zeros(spec.param_count), 0.0, schedule)
    with pytest.raises(StructuralError):
        ConsistencyModel(spec, np.zeros(3), 1.0, schedule)


def test_with_params_shares_everything_else(rng):
    model = make_model(rng)
    p2 = model.params + 1.0
    m2 = model.with_params(p2)
    assert m2.params is p2
    assert m2.schedule is model.schedule
    assert m2.sigma_data == model.sigma_data


def test_squared_l2_distance_345():
    a = np.array([[0.0, 0.0]])
    b = np.array([[3.0, 4.0]])
    fn = DistanceFn.squared_l2()
    assert distance(fn, a, b)[0] == 25.0
    assert distance(fn, a, a)[0] == 0.0


def test_pseudo_huber_limits(rng):
    fn = DistanceFn.pseudo_huber(2)
    c = fn.huber_c
    # small residuals: quadratic ~ r^2 / (2c); large residuals: linear ~ r - c
    r_small = 1e-6 * c
    d_small = distance(fn, np.zeros((1, 2)), np.array([[r_small, 0.0]]))[0]
    assert d_small == pytest.approx(r_small ** 2 / (2 * c), rel=1e-6)
    r_big = 1e6 * c
    d_big = distance(fn, np.zeros((1, 2)), np.array([[r_big, 0.0]]))[0]
    assert d_big == pytest.approx(r_big - c, rel=1e-9)


def test_pseudo_huber_constant_scales_with_sqrt_dim():
    assert DistanceFn.pseudo_huber(4).huber_c == pytest.approx(
        2.0 * DistanceFn.pseudo_huber(1).huber_c)


def test_distance_vjp_matches_finite_differences(rng):
    for fn in (DistanceFn.squared_l2(), DistanceFn.pseudo_huber(3)):
        a = rng.normal(size=(4, 3))
        b = rng.normal(size=(4, 3))

        def total(b_flat):
            return float(np.sum(distance(fn, a, b_flat.reshape(4, 3))))

        g = distance_vjp(fn, a, b)
        fd = central_diff(total, b.ravel()).reshape(4, 3)
        assert rel_err(g, fd) < 1e-8


def test_distance_is_nonnegative_and_zero_at_equality(rng):
    for fn in (DistanceFn.squared_l2(), DistanceFn.pseudo_huber(2)):
        a = rng.normal(size=(20, 2))
        b = rng.normal(size=(20, 2))
        assert np.all(distance(fn, a, b) >= 0)
        assert np.max(np.abs(distance(fn, a, a))) == 0.0


def test_distance_validation():
    fn = DistanceFn.squared_l2()
    with pytest.raises(StructuralError):
        distance(fn, np.zeros((2, 2)), np.zeros((3, 2)))
    with pytest.raises(ConfigError):
        DistanceFn("l1")
    with pytest.raises(ConfigError):
        DistanceFn(kind="pseudo_huber", huber_c=0.0)
