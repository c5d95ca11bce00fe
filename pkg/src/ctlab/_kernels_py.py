"""Pure numpy/scipy implementations of the hot kernels.

This module mirrors the interface of the compiled extension `_kernels` and is
selected at import time when the extension is unavailable (or when forced via
CTLAB_BACKEND=python). Semantics must match the compiled versions exactly up
to floating-point rounding; tests cross-check the two backends.
"""

import numpy as np
from scipy import special

BACKEND_NAME = "python"

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def gelu(x):
    """Exact GELU, x * Phi(x) with the Gaussian CDF Phi."""
    return 0.5 * x * (1.0 + special.erf(x * _INV_SQRT2))


def gelu_vjp(pre, gout):
    """Backprop through GELU: gout * gelu'(pre).

    gelu'(x) = Phi(x) + x * phi(x), with phi the standard normal pdf.
    """
    phi = _INV_SQRT_2PI * np.exp(-0.5 * pre * pre)
    slope = 0.5 * (1.0 + special.erf(pre * _INV_SQRT2)) + pre * phi
    return gout * slope


def adam_update(params, grads, m, v, t, lr, beta1, beta2, eps):
    """In-place Adam step. `t` is the 1-based step count after incrementing."""
    m *= beta1
    m += (1.0 - beta1) * grads
    v *= beta2
    v += (1.0 - beta2) * grads * grads
    mhat = m / (1.0 - beta1 ** t)
    vhat = v / (1.0 - beta2 ** t)
    params -= lr * mhat / (np.sqrt(vhat) + eps)


def lion_update(params, grads, m, lr, beta1, beta2):
    """In-place Lion step: sign of interpolated momentum, then momentum update."""
    update = np.sign(beta1 * m + (1.0 - beta1) * grads)
    params -= lr * update
    m *= beta2
    m += (1.0 - beta2) * grads


def ema_update(ema, params, decay):
    ema *= decay
    ema += (1.0 - decay) * params


def row_grad_sqnorm(act_in, delta, out):
    """Accumulate per-row squared gradient norms for one dense layer.

    For row j the weight gradient is the outer product act_in[j] (x) delta[j]
    and the bias gradient is delta[j], so the squared Frobenius norm of the
    per-row gradient is (||act_in[j]||^2 + 1) * ||delta[j]||^2. Adds into
    `out` (shape (n,)) in place.
    """
    a2 = np.einsum("ij,ij->i", act_in, act_in)
    d2 = np.einsum("ij,ij->i", delta, delta)
    out += (a2 + 1.0) * d2


def hungarian(cost):
    """Minimum-cost perfect matching on a square cost matrix.

    Shortest-augmenting-path algorithm with potentials, O(n^3). Returns an
    int64 array `col` with col[i] the column assigned to row i.
    """
    cost = np.ascontiguousarray(cost, dtype=np.float64)
    n = cost.shape[0]
    if cost.ndim != 2 or cost.shape[1] != n:
        raise ValueError("cost matrix must be square")
    inf = np.inf
    # Column 0 is a virtual column; real columns are 1..n.
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=np.int64)  # p[j] = row matched to column j
    way = np.zeros(n + 1, dtype=np.int64)
    cols = np.arange(1, n + 1)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = cols[~used[1:]]
            cur = cost[i0 - 1, free - 1] - u[i0] - v[free]
            better = cur < minv[free]
            minv[free] = np.where(better, cur, minv[free])
            way[free[better]] = j0
            k = np.argmin(minv[free])
            delta = minv[free][k]
            j1 = free[k]
            u[p[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0 != 0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    col = np.empty(n, dtype=np.int64)
    col[p[1:] - 1] = cols - 1
    return col
