"""Shared test helpers: finite differences and small random configurations."""

import numpy as np
import pytest


def central_diff(f, x0, eps=1e-6):
    """Central finite-difference gradient of scalar f at flat vector x0."""
    x0 = np.asarray(x0, dtype=np.float64)
    g = np.empty_like(x0)
    for i in range(x0.size):
        xp = x0.copy()
        xm = x0.copy()
        xp[i] += eps
        xm[i] -= eps
        g[i] = (f(xp) - f(xm)) / (2.0 * eps)
    return g


def rel_err(approx, exact):
    """Infinity-norm error normalized by the exact gradient's scale."""
    approx = np.asarray(approx, dtype=np.float64)
    exact = np.asarray(exact, dtype=np.float64)
    scale = max(float(np.max(np.abs(exact))), 1.0)
    return float(np.max(np.abs(approx - exact))) / scale


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
