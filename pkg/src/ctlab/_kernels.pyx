# cython: language_level=3
"""Compiled implementations of the hot kernels.

Same interface as `_kernels_py`; fused elementwise loops compiled with
-O3 -march=native -fno-math-errno so erf/exp vectorize.
"""

import numpy as np

cimport cython
cimport numpy as cnp
from libc.math cimport erf, exp, sqrt, fabs, INFINITY

cnp.import_array()

BACKEND_NAME = "compiled"

cdef double INV_SQRT2 = 0.7071067811865476
cdef double INV_SQRT_2PI = 0.3989422804014327


@cython.boundscheck(False)
@cython.wraparound(False)
def gelu(object x):
    cdef cnp.ndarray[double, ndim=2, mode="c"] xin = np.ascontiguousarray(x, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] out = np.empty_like(xin)
    cdef double* xp = <double*> xin.data
    cdef double* op = <double*> out.data
    cdef Py_ssize_t k, total = xin.shape[0] * xin.shape[1]
    cdef double v
    for k in range(total):
        v = xp[k]
        op[k] = 0.5 * v * (1.0 + erf(v * INV_SQRT2))
    return out


@cython.boundscheck(False)
@cython.wraparound(False)
def gelu_vjp(object pre, object gout):
    cdef cnp.ndarray[double, ndim=2, mode="c"] p = np.ascontiguousarray(pre, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] g = np.ascontiguousarray(gout, dtype=np.float64)
    if p.shape[0] != g.shape[0] or p.shape[1] != g.shape[1]:
        raise ValueError("pre/gout shape mismatch")
    cdef cnp.ndarray[double, ndim=2, mode="c"] out = np.empty_like(p)
    cdef double* pp = <double*> p.data
    cdef double* gp = <double*> g.data
    cdef double* op = <double*> out.data
    cdef Py_ssize_t k, total = p.shape[0] * p.shape[1]
    cdef double v, phi
    for k in range(total):
        v = pp[k]
        phi = INV_SQRT_2PI * exp(-0.5 * v * v)
        op[k] = gp[k] * (0.5 * (1.0 + erf(v * INV_SQRT2)) + v * phi)
    return out


@cython.boundscheck(False)
@cython.wraparound(False)
@cython.cdivision(True)
def adam_update(cnp.ndarray[double, ndim=1, mode="c"] params,
                cnp.ndarray[double, ndim=1, mode="c"] grads,
                cnp.ndarray[double, ndim=1, mode="c"] m,
                cnp.ndarray[double, ndim=1, mode="c"] v,
                long t, double lr, double beta1, double beta2, double eps):
    cdef Py_ssize_t k, n = params.shape[0]
    cdef double bc1 = 1.0 - beta1 ** t
    cdef double bc2 = 1.0 - beta2 ** t
    cdef double g, mk, vk
    for k in range(n):
        g = grads[k]
        mk = beta1 * m[k] + (1.0 - beta1) * g
        vk = beta2 * v[k] + (1.0 - beta2) * g * g
        m[k] = mk
        v[k] = vk
        params[k] -= lr * (mk / bc1) / (sqrt(vk / bc2) + eps)


@cython.boundscheck(False)
@cython.wraparound(False)
def lion_update(cnp.ndarray[double, ndim=1, mode="c"] params,
                cnp.ndarray[double, ndim=1, mode="c"] grads,
                cnp.ndarray[double, ndim=1, mode="c"] m,
                double lr, double beta1, double beta2):
    cdef Py_ssize_t k, n = params.shape[0]
    cdef double g, c
    for k in range(n):
        g = grads[k]
        c = beta1 * m[k] + (1.0 - beta1) * g
        if c > 0.0:
            params[k] -= lr
        elif c < 0.0:
            params[k] += lr
        m[k] = beta2 * m[k] + (1.0 - beta2) * g


@cython.boundscheck(False)
@cython.wraparound(False)
def ema_update(cnp.ndarray[double, ndim=1, mode="c"] ema,
               cnp.ndarray[double, ndim=1, mode="c"] params,
               double decay):
    cdef Py_ssize_t k, n = ema.shape[0]
    for k in range(n):
        ema[k] = decay * ema[k] + (1.0 - decay) * params[k]


@cython.boundscheck(False)
@cython.wraparound(False)
def row_grad_sqnorm(object act_in, object delta, cnp.ndarray[double, ndim=1, mode="c"] out):
    cdef cnp.ndarray[double, ndim=2, mode="c"] a = np.ascontiguousarray(act_in, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] d = np.ascontiguousarray(delta, dtype=np.float64)
    cdef Py_ssize_t j, k, n = a.shape[0], fa = a.shape[1], fd = d.shape[1]
    if d.shape[0] != n or out.shape[0] != n:
        raise ValueError("row count mismatch")
    cdef double a2, d2
    for j in range(n):
        a2 = 0.0
        for k in range(fa):
            a2 += a[j, k] * a[j, k]
        d2 = 0.0
        for k in range(fd):
            d2 += d[j, k] * d[j, k]
        out[j] += (a2 + 1.0) * d2


@cython.boundscheck(False)
@cython.wraparound(False)
def hungarian(object cost):
    """Minimum-cost assignment, shortest augmenting paths with potentials."""
    cdef cnp.ndarray[double, ndim=2, mode="c"] c = np.ascontiguousarray(cost, dtype=np.float64)
    cdef Py_ssize_t n = c.shape[0]
    if c.shape[1] != n:
        raise ValueError("cost matrix must be square")
    cdef cnp.ndarray[double, ndim=1] u = np.zeros(n + 1)
    cdef cnp.ndarray[double, ndim=1] v = np.zeros(n + 1)
    cdef cnp.ndarray[double, ndim=1] minv = np.empty(n + 1)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] p = np.zeros(n + 1, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] way = np.zeros(n + 1, dtype=np.int64)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] used = np.zeros(n + 1, dtype=np.uint8)
    cdef Py_ssize_t i, j, j0, j1, i0
    cdef double delta, cur
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv[:] = INFINITY
        used[:] = 0
        while True:
            used[j0] = 1
            i0 = p[j0]
            delta = INFINITY
            j1 = 0
            for j in range(1, n + 1):
                if used[j]:
                    continue
                cur = c[i0 - 1, j - 1] - u[i0] - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta = minv[j]
                    j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0 != 0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    cdef cnp.ndarray[cnp.int64_t, ndim=1] col = np.empty(n, dtype=np.int64)
    for j in range(1, n + 1):
        col[p[j] - 1] = j - 1
    return col
