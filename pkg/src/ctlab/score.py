"""Score model trained by denoising score matching, and the Euler PF-ODE step.

The network is wrapped in denoiser preconditioning

    D(y, sigma) = c_skip(sigma) y + c_out(sigma) F(c_in(sigma) y, sigma)
    c_in = 1/sqrt(sigma^2 + sigma_data^2)
    c_skip = sigma_data^2 / (sigma^2 + sigma_data^2)
    c_out = sigma sigma_data / sqrt(sigma^2 + sigma_data^2)

and the score is recovered as s(y, sigma) = (D(y, sigma) - y) / sigma^2.
The Euler update x_i = x_{i+1} - (sigma_i - sigma_{i+1}) sigma_{i+1}
s(x_{i+1}, sigma_{i+1}) integrates the probability-flow ODE backward; it
accepts either a trained model's score or the analytic mixture score.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import nn
from .errors import ConfigError, NumericError, StructuralError


@dataclass
class ScoreModel:
    spec: nn.NetworkSpec
    params: np.ndarray
    sigma_data: float
    schedule: object

    def __post_init__(self):
        if self.sigma_data <= 0.0:
            raise ConfigError(f"sigma_data must be positive, got {self.sigma_data}")
        if self.params.shape != (self.spec.param_count,):
            raise StructuralError("params do not match the network spec")

    def with_params(self, params):
        return ScoreModel(self.spec, params, self.sigma_data, self.schedule)

    def preconditioners(self, sigma):
        s2 = sigma * sigma
        d2 = self.sigma_data * self.sigma_data
        denom = np.sqrt(s2 + d2)
        return 1.0 / denom, d2 / (s2 + d2), sigma * self.sigma_data / denom


def denoiser(model, y, sigma, want_tape=False):
    """D(y, sigma); the tape covers the inner network evaluation."""
    y = np.asarray(y, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    c_in, c_skip, c_out = model.preconditioners(sigma)
    raw, tape = nn.forward(model.spec, model.params, c_in[:, None] * y, sigma,
                           want_tape=want_tape)
    return c_skip[:, None] * y + c_out[:, None] * raw, tape


def model_score(model, y, sigma):
    sigma = np.asarray(sigma, dtype=np.float64)
    d, _ = denoiser(model, y, sigma)
    return (d - y) / (sigma * sigma)[:, None]


def make_score_fn(source):
    """Normalize a score source to a callable (y, sigma) -> score batch.

    `source` is a ScoreModel, a GaussianMixture-like object exposing
    perturbed_score, or already a callable.
    """
    if isinstance(source, ScoreModel):
        return lambda y, sigma: model_score(source, y, _per_sample(sigma, y))
    if hasattr(source, "perturbed_score"):
        return lambda y, sigma: source.perturbed_score(y, sigma)
    if callable(source):
        return source
    raise ConfigError(f"cannot interpret {type(source).__name__} as a score source")


def _per_sample(sigma, y):
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma.ndim == 0:
        return np.full(y.shape[0], float(sigma))
    return sigma


def dsm_loss(model, x, z, sigma, want_grads=True):
    """Denoising loss: weighted squared error of D(x + sigma z, sigma) vs x.

    The weight (sigma^2 + sigma_data^2) / (sigma sigma_data)^2 equalizes the
    loss scale across noise levels. Returns (loss, grads); grads is None when
    not requested.
    """
    x = np.asarray(x, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    if x.shape != z.shape or sigma.shape != (x.shape[0],):
        raise StructuralError("x, z batches and per-sample sigma must align")
    n = x.shape[0]
    y = x + sigma[:, None] * z
    d, tape = denoiser(model, y, sigma, want_tape=want_grads)
    w = (sigma ** 2 + model.sigma_data ** 2) / (sigma * model.sigma_data) ** 2
    resid = d - x
    loss = float(np.mean(w * np.einsum("ij,ij->i", resid, resid)))
    if not np.isfinite(loss):
        raise NumericError("non-finite denoising loss")
    if not want_grads:
        return loss, None
    _c_in, _c_skip, c_out = model.preconditioners(sigma)
    cot = (2.0 / n) * (w * c_out)[:, None] * resid
    res = nn.backward(model.spec, model.params, tape, cot)
    return loss, res["grads"]


def euler_pfode_update(score_fn, x_next, sigma_i, sigma_next):
    """One backward Euler step of the probability-flow ODE.

    x_i = x_{i+1} - (sigma_i - sigma_{i+1}) sigma_{i+1} s(x_{i+1}, sigma_{i+1}).
    """
    x_next = np.asarray(x_next, dtype=np.float64)
    if sigma_i == sigma_next:
        return x_next.copy()
    s = score_fn(x_next, sigma_next)
    return x_next - (sigma_i - sigma_next) * sigma_next * s


def pfode_solve(score_fn, z, schedule, return_trajectory=False):
    """Integrate from sigma_max down the full grid, starting at x_N = z."""
    x = np.asarray(z, dtype=np.float64).copy()
    grid = schedule.grid
    traj = [x.copy()] if return_trajectory else None
    for i in range(len(grid) - 2, -1, -1):
        x = euler_pfode_update(score_fn, x, grid[i], grid[i + 1])
        if np.max(np.abs(x)) > 1e6:
            raise NumericError(f"PF-ODE solve diverged at grid index {i}",
                               context={"index": i})
        if return_trajectory:
            traj.append(x.copy())
    if return_trajectory:
        return x, np.stack(traj)
    return x


def train_score(setting, schedule, spec, n_steps, batch_size, lr, streams,
                sigma_data=None, p_mean=-1.1, p_std=2.0):
    """Fit a ScoreModel on the setting's data distribution with Adam.

    Noise levels are drawn lognormal(p_mean, p_std) clipped to the schedule
    range. Returns the trained model (live parameters). Lightweight helper
    for tests; the config-driven path is ScoreTrainer.
    """
    from .optim import AdamState

    pool = setting.data_dist.sample(setting.n_samples, streams["data_pool"])
    if sigma_data is None:
        sigma_data = setting.data_dist.marginal_std()
    params = nn.init_params(spec, streams["init"])
    model = ScoreModel(spec, params, sigma_data, schedule)
    opt = AdamState(lr=lr)
    for _ in range(n_steps):
        rows = streams["data"].integers(0, setting.n_samples, size=batch_size)
        x = pool[rows]
        z = streams["noise"].standard_normal(x.shape)
        sigma = np.exp(p_mean + p_std * streams["timestep"].standard_normal(batch_size))
        sigma = np.clip(sigma, schedule.sigma_min, schedule.sigma_max)
        _loss, grads = dsm_loss(model, x, z, sigma)
        opt.step(params, grads)
    return model


class ScoreTrainer:
    """Config-driven denoising training; mirrors the consistency Trainer API."""

    def __init__(self, config):
        from . import rng as rng_mod
        from .optim import EmaTracker, make_optimizer
        from .schedule import build_schedule

        if config.model_kind != "score":
            raise ConfigError("ScoreTrainer requires model_kind = score")
        self.config = config
        self.streams = rng_mod.make_streams(config.seed)
        self.setting = config.build_setting()
        self.pool = self.setting.data_dist.sample(config.n_samples,
                                                  self.streams["data_pool"])
        self.sigma_data = (config.sigma_data if config.sigma_data > 0.0
                           else self.setting.data_dist.marginal_std())
        n_final = config.build_curriculum().n_intervals(config.total_steps - 1)
        self.schedule = build_schedule(config.sigma_min, config.sigma_max,
                                       config.rho, n_final)
        self.spec = config.network_spec()
        self.params = nn.init_params(self.spec, self.streams["init"])
        self.optimizer = make_optimizer(config.optimizer, config.lr)
        self.ema = EmaTracker(config.ema_decay, self.params.copy())
        self.step_count = 0

    def model(self, use_ema=True):
        params = self.ema.params if use_ema else self.params
        return ScoreModel(self.spec, params, self.sigma_data, self.schedule)

    def step(self):
        cfg = self.config
        rows = self.streams["data"].integers(0, cfg.n_samples, size=cfg.batch_size)
        x = self.pool[rows]
        z = self.streams["noise"].standard_normal(x.shape)
        sigma = np.exp(cfg.p_mean
                       + cfg.p_std * self.streams["timestep"].standard_normal(cfg.batch_size))
        sigma = np.clip(sigma, self.schedule.sigma_min, self.schedule.sigma_max)
        loss, grads = dsm_loss(self.model(use_ema=False), x, z, sigma)
        self.optimizer.step(self.params, grads)
        self.ema.update(self.params)
        self.step_count += 1
        return loss

    def run(self, on_metrics=None, on_checkpoint=None):
        cfg = self.config
        records = []
        while self.step_count < cfg.total_steps:
            loss = self.step()
            step = self.step_count
            if step % cfg.metric_interval == 0 or step == cfg.total_steps:
                rows = [(step, "loss", loss)]
                records.extend(rows)
                if on_metrics is not None:
                    on_metrics(rows)
            if on_checkpoint is not None and (
                    step % cfg.checkpoint_interval == 0 or step == cfg.total_steps):
                on_checkpoint(step, self)
        return records
