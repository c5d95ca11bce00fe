"""Compiled extension vs numpy fallback parity."""

import os
import subprocess
import sys

import numpy as np
import pytest

from ctlab import _kernels_py, backend
from ctlab.errors import ConfigError

HAVE_COMPILED = "compiled" in backend.available_backends()

pytestmark = pytest.mark.skipif(
    not HAVE_COMPILED, reason="compiled extension not built")

from ctlab import _kernels  # noqa: E402  (guarded by the skip above)


def _rand(rng, n):
    return rng.standard_normal(n)


def test_gelu_and_vjp_match(rng):
    x = _rand(rng, 4096).reshape(64, 64) * 6.0
    np.testing.assert_allclose(_kernels.gelu(x), _kernels_py.gelu(x),
                               rtol=1e-13, atol=1e-15)
    gout = _rand(rng, 4096).reshape(64, 64)
    np.testing.assert_allclose(_kernels.gelu_vjp(x, gout),
                               _kernels_py.gelu_vjp(x, gout),
                               rtol=1e-13, atol=1e-15)


def test_adam_update_matches(rng):
    n = 2048
    base = {
        "params": _rand(rng, n), "grads": _rand(rng, n),
        "m": _rand(rng, n) * 0.1, "v": np.abs(_rand(rng, n)) * 0.01,
    }
    state_a = {k: v.copy() for k, v in base.items()}
    state_b = {k: v.copy() for k, v in base.items()}
    for t in range(1, 4):
        _kernels.adam_update(state_a["params"], state_a["grads"], state_a["m"],
                             state_a["v"], t, 1e-3, 0.9, 0.999, 1e-8)
        _kernels_py.adam_update(state_b["params"], state_b["grads"], state_b["m"],
                                state_b["v"], t, 1e-3, 0.9, 0.999, 1e-8)
    for key in ("params", "m", "v"):
        np.testing.assert_allclose(state_a[key], state_b[key],
                                   rtol=1e-14, atol=1e-16)


def test_lion_update_matches(rng):
    n = 2048
    p_a, g, m_a = _rand(rng, n), _rand(rng, n), _rand(rng, n)
    p_b, m_b = p_a.copy(), m_a.copy()
    _kernels.lion_update(p_a, g, m_a, 1e-3, 0.9, 0.99)
    _kernels_py.lion_update(p_b, g, m_b, 1e-3, 0.9, 0.99)
    np.testing.assert_array_equal(p_a, p_b)
    np.testing.assert_allclose(m_a, m_b, rtol=1e-14)


def test_ema_update_matches(rng):
    n = 1024
    e_a, p = _rand(rng, n), _rand(rng, n)
    e_b = e_a.copy()
    _kernels.ema_update(e_a, p, 0.995)
    _kernels_py.ema_update(e_b, p, 0.995)
    np.testing.assert_allclose(e_a, e_b, rtol=1e-14, atol=1e-16)


def test_row_grad_sqnorm_matches(rng):
    act = _rand(rng, 64 * 10).reshape(64, 10)
    delta = _rand(rng, 64 * 7).reshape(64, 7)
    out_a = np.zeros(64)
    out_b = np.zeros(64)
    _kernels.row_grad_sqnorm(act, delta, out_a)
    _kernels_py.row_grad_sqnorm(act, delta, out_b)
    np.testing.assert_allclose(out_a, out_b, rtol=1e-12)


def test_hungarian_matches_on_random_instances(rng):
    for _ in range(50):
        n = int(rng.integers(1, 12))
        cost = rng.standard_normal((n, n))
        perm_a = np.asarray(_kernels.hungarian(cost))
        perm_b = np.asarray(_kernels_py.hungarian(cost))
        assert sorted(perm_a) == list(range(n))
        total_a = cost[np.arange(n), perm_a].sum()
        total_b = cost[np.arange(n), perm_b].sum()
        # permutations may differ under ties; the optimal cost may not
        assert abs(total_a - total_b) < 1e-9


def test_use_switches_the_active_backend():
    original = backend.name
    try:
        backend.use("python")
        assert backend.name == "python"
        x = np.array([0.0, 1.0, -1.0])
        np.testing.assert_allclose(backend.gelu(x), _kernels_py.gelu(x))
        backend.use("compiled")
        assert backend.name == "compiled"
    finally:
        backend.use(original)


def test_unknown_backend_is_rejected():
    with pytest.raises(ConfigError):
        backend.use("fortran")


def test_available_backends_lists_both():
    names = backend.available_backends()
    assert names[0] == "compiled" and "python" in names


def test_env_var_forces_python_backend():
    code = ("import ctlab.backend as b; print(b.name)")
    env = dict(os.environ, CTLAB_BACKEND="python")
    out = subprocess.run([sys.executable, "-c", code], env=env,
                         capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.strip() == "python"


def test_env_var_rejects_unknown_backend():
    code = "import ctlab.backend"
    env = dict(os.environ, CTLAB_BACKEND="gpu")
    out = subprocess.run([sys.executable, "-c", code], env=env,
                         capture_output=True, text=True)
    assert out.returncode != 0
    assert "unknown backend" in out.stderr


def test_training_agrees_across_backends():
    """A short run must produce identical parameters on both backends."""
    from ctlab.train import TrainConfig, Trainer

    cfg = TrainConfig(setting="1m-2m", n_samples=100, hidden_dim=8, depth=2,
                      batch_size=8, total_steps=5, curriculum="fixed",
                      n_steps_fixed=6, seed=0, mu=0.5)
    results = {}
    original = backend.name
    try:
        for name in ("compiled", "python"):
            backend.use(name)
            trainer = Trainer(cfg)
            trainer.run()
            results[name] = trainer.params.copy()
    finally:
        backend.use(original)
    np.testing.assert_allclose(results["compiled"], results["python"],
                               rtol=1e-12, atol=1e-14)
