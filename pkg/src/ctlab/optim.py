"""Flat-vector optimizers: Adam, Lion, and an EMA tracker.

All state lives in plain float64 arrays matching the parameter layout, so
optimizer state serializes with the checkpoint and moves freely between
threads. One writer per state object; steps mutate in place and return the
updated arrays for convenience.
"""

from dataclasses import dataclass, field

import numpy as np

from . import backend
from .errors import ConfigError, NumericError, StructuralError


def _check_grads(grads, step_count):
    if not np.all(np.isfinite(grads)):
        bad = int(np.flatnonzero(~np.isfinite(grads))[0])
        raise NumericError(
            f"non-finite gradient at flat index {bad} on step {step_count}",
            context={"index": bad, "step": step_count})


@dataclass
class AdamState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: np.ndarray = None
    v: np.ndarray = None
    step_count: int = 0

    kind = "adam"

    def step(self, params, grads):
        if self.m is None:
            self.m = np.zeros_like(params)
            self.v = np.zeros_like(params)
        if grads.shape != params.shape or self.m.shape != params.shape:
            raise StructuralError("optimizer state / gradient shape mismatch")
        self.step_count += 1
        _check_grads(grads, self.step_count)
        backend.adam_update(params, grads, self.m, self.v, self.step_count,
                            self.lr, self.beta1, self.beta2, self.eps)
        return params, self


@dataclass
class LionState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.99
    m: np.ndarray = None
    step_count: int = 0

    kind = "lion"

    def step(self, params, grads):
        if self.m is None:
            self.m = np.zeros_like(params)
        if grads.shape != params.shape or self.m.shape != params.shape:
            raise StructuralError("optimizer state / gradient shape mismatch")
        self.step_count += 1
        _check_grads(grads, self.step_count)
        backend.lion_update(params, grads, self.m, self.lr, self.beta1, self.beta2)
        return params, self


def make_optimizer(kind, lr, **kwargs):
    if kind == "adam":
        return AdamState(lr=lr, **kwargs)
    if kind == "lion":
        return LionState(lr=lr, **kwargs)
    raise ConfigError(f"unknown optimizer {kind!r} (expected 'adam' or 'lion')")


@dataclass
class EmaTracker:
    """Exponential moving average of the parameter vector."""

    decay: float
    params: np.ndarray = field(default=None)

    def __post_init__(self):
        if not 0.0 <= self.decay < 1.0:
            raise ConfigError(f"ema decay must be in [0, 1), got {self.decay}")

    def update(self, live_params):
        if self.params is None:
            self.params = live_params.copy()
            return self.params
        if self.params.shape != live_params.shape:
            raise StructuralError("ema / parameter shape mismatch")
        backend.ema_update(self.params, live_params, self.decay)
        return self.params
