"""Kernel backend selection.

The compiled extension is preferred when importable; the numpy fallback is
used otherwise. CTLAB_BACKEND=python|compiled forces a choice (forcing
"compiled" when the extension is missing is an error rather than a silent
downgrade). The active backend is fixed at import; `use()` exists so tests
can exercise both implementations in one process.
"""

import os

from .errors import ConfigError

from . import _kernels_py

try:
    from . import _kernels
except ImportError:
    _kernels = None


def available_backends():
    names = ["python"]
    if _kernels is not None:
        names.insert(0, "compiled")
    return names


def _select(name):
    if name == "python":
        return _kernels_py
    if name == "compiled":
        if _kernels is None:
            raise ConfigError("compiled backend requested but the extension is not built")
        return _kernels
    raise ConfigError(f"unknown backend {name!r} (expected 'python' or 'compiled')")


_forced = os.environ.get("CTLAB_BACKEND", "").strip().lower()
if _forced:
    _impl = _select(_forced)
else:
    _impl = _kernels if _kernels is not None else _kernels_py

name = _impl.BACKEND_NAME


def use(backend_name):
    """Switch the active backend (testing/benchmark hook)."""
    global _impl, name
    _impl = _select(backend_name)
    name = _impl.BACKEND_NAME


def gelu(x):
    return _impl.gelu(x)


def gelu_vjp(pre, gout):
    return _impl.gelu_vjp(pre, gout)


def adam_update(params, grads, m, v, t, lr, beta1, beta2, eps):
    _impl.adam_update(params, grads, m, v, t, lr, beta1, beta2, eps)


def lion_update(params, grads, m, lr, beta1, beta2):
    _impl.lion_update(params, grads, m, lr, beta1, beta2)


def ema_update(ema, params, decay):
    _impl.ema_update(ema, params, decay)


def row_grad_sqnorm(act_in, delta, out):
    _impl.row_grad_sqnorm(act_in, delta, out)


def hungarian(cost):
    return _impl.hungarian(cost)
