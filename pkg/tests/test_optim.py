"""Optimizer update rules against hand-computed references."""

import numpy as np
import pytest

from ctlab.errors import ConfigError, NumericError, StructuralError
from ctlab.optim import AdamState, EmaTracker, LionState, make_optimizer


def test_adam_single_step_hand_computed():
    # one step from zero moments: m_hat = g, v_hat = g^2,
    # update = lr * g / (|g| + eps)  -> roughly lr * sign(g)
    params = np.array([1.0, -2.0, 0.5])
    grads = np.array([0.3, -0.7, 0.0])
    lr, eps = 0.1, 1e-8
    opt = AdamState(lr=lr, eps=eps)
    expect = params - lr * grads / (np.sqrt(grads * grads) + eps)
    opt.step(params, grads)
    assert np.allclose(params, expect, rtol=0.0, atol=1e-15)


def test_adam_two_steps_match_reference_loop():
    rng = np.random.default_rng(3)
    params = rng.normal(size=6)
    ref = params.copy()
    g1 = rng.normal(size=6)
    g2 = rng.normal(size=6)
    lr, b1, b2, eps = 0.01, 0.9, 0.999, 1e-8

    m = np.zeros(6)
    v = np.zeros(6)
    for t, g in ((1, g1), (2, g2)):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mhat = m / (1 - b1 ** t)
        vhat = v / (1 - b2 ** t)
        ref = ref - lr * mhat / (np.sqrt(vhat) + eps)

    opt = AdamState(lr=lr, beta1=b1, beta2=b2, eps=eps)
    opt.step(params, g1)
    opt.step(params, g2)
    assert np.allclose(params, ref, rtol=1e-14, atol=1e-15)


def test_adam_zero_gradient_is_fixed_point():
    params = np.array([3.0, -1.0])
    before = params.copy()
    opt = AdamState(lr=0.5)
    for _ in range(5):
        opt.step(params, np.zeros(2))
    assert np.array_equal(params, before)


def test_lion_update_is_sign_of_interpolated_momentum():
    # update direction: sign(beta1 * m + (1 - beta1) * g); with m = 1 and a
    # large opposing gradient the sign flips even though |m| is small.
    params = np.zeros(1)
    opt = LionState(lr=0.1, beta1=0.9, beta2=0.99, m=np.array([1.0]))
    opt.step(params, np.array([-100.0]))
    assert params[0] == pytest.approx(0.1)  # sign(0.9 - 10) = -1 -> -lr * (-1)
    # momentum afterwards: 0.99 * 1 + 0.01 * (-100) = -0.01
    assert opt.m[0] == pytest.approx(-0.01)


def test_lion_zero_update_when_interpolation_cancels():
    params = np.zeros(1)
    opt = LionState(lr=0.1, beta1=0.5, beta2=0.99, m=np.array([1.0]))
    opt.step(params, np.array([-1.0]))
    assert params[0] == 0.0  # sign(0.5 - 0.5) = 0


def test_lion_is_invariant_to_gradient_scale():
    rng = np.random.default_rng(9)
    g = rng.normal(size=8)
    p1 = rng.normal(size=8)
    p2 = p1.copy()
    a = LionState(lr=0.01)
    b = LionState(lr=0.01)
    a.step(p1, g)
    b.step(p2, 1000.0 * g)
    assert np.array_equal(p1, p2)  # sign() discards magnitude
    assert np.allclose(b.m, 1000.0 * a.m)


def test_ema_tracks_constant_and_contracts():
    target = np.array([1.0, 2.0])
    ema = EmaTracker(decay=0.9, params=np.zeros(2))
    gaps = []
    for _ in range(10):
        ema.update(target)
        gaps.append(np.max(np.abs(ema.params - target)))
    assert all(b < a for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] == pytest.approx(0.9 ** 10 * 2.0, rel=1e-12)


def test_ema_decay_zero_copies_live_params():
    ema = EmaTracker(decay=0.0, params=np.array([5.0, 5.0]))
    live = np.array([-1.0, 2.0])
    ema.update(live)
    assert np.array_equal(ema.params, live)


def test_ema_first_update_seeds_from_live():
    ema = EmaTracker(decay=0.999)
    live = np.array([1.0, -1.0])
    out = ema.update(live)
    assert np.array_equal(out, live)
    assert out is not live  # must be an independent copy
    live[0] = 99.0
    assert ema.params[0] == 1.0


def test_ema_decay_validation():
    with pytest.raises(ConfigError):
        EmaTracker(decay=1.0)
    with pytest.raises(ConfigError):
        EmaTracker(decay=-0.1)


def test_non_finite_gradients_raise_with_location():
    opt = AdamState(lr=0.1)
    params = np.zeros(4)
    grads = np.array([0.0, 1.0, np.nan, 2.0])
    with pytest.raises(NumericError) as exc:
        opt.step(params, grads)
    assert exc.value.context["index"] == 2
    opt2 = LionState(lr=0.1)
    with pytest.raises(NumericError):
        opt2.step(params, np.array([np.inf, 0.0, 0.0, 0.0]))


def test_shape_mismatch_raises():
    opt = AdamState(lr=0.1)
    with pytest.raises(StructuralError):
        opt.step(np.zeros(3), np.zeros(4))


def test_make_optimizer_dispatch():
    assert make_optimizer("adam", 0.1).kind == "adam"
    assert make_optimizer("lion", 0.1).kind == "lion"
    with pytest.raises(ConfigError):
        make_optimizer("sgd", 0.1)


def test_optimizers_update_in_place():
    params = np.ones(3)
    handle = params
    AdamState(lr=0.1).step(params, np.ones(3))
    assert handle is params and handle[0] != 1.0
