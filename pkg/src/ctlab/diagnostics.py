"""Quantitative diagnostics: gradient variance, transport cost, distance to
probability-flow updates, and sample-quality summaries.

All diagnostics share the (x, z, i) randomness between the independent and
generator-induced arms, so directional comparisons are paired and usable at
small sample sizes. Everything is pure given a model snapshot and an rng.
"""

from dataclasses import dataclass

import numpy as np

from . import schedule as sched
from .coupling import induce_gc, sample_ic
from .errors import ConfigError, StructuralError
from .model import DistanceFn, consistency_output
from .score import euler_pfode_update, make_score_fn
from .train import batch_gradient_variance, consistency_loss

VARIANCE_ESTIMATOR = "per-sample-within-batch"


@dataclass
class VarianceReport:
    step: int
    variance: float
    estimator: str = VARIANCE_ESTIMATOR


@dataclass
class TransportReport:
    timesteps: np.ndarray   # grid indices 0..N
    sigmas: np.ndarray
    ic_mean: np.ndarray     # mean squared cost per timestep
    gc_mean: np.ndarray
    ic_costs: np.ndarray    # (N+1, n) per-sample squared costs
    gc_costs: np.ndarray


@dataclass
class PfodeDistanceReport:
    step: int
    ic_distance: float      # E ||x_i - x_i^phi||, i ~ timestep distribution
    gc_distance: float      # E ||x~_i - x~_i^phi||
    intervals: np.ndarray
    ic_by_interval: np.ndarray
    gc_by_interval: np.ndarray


def _endpoint_fn(model):
    """Accept a ConsistencyModel or a raw (x, sigma) -> endpoint callable."""
    if callable(model) and not hasattr(model, "params"):
        return model
    return lambda x, sigma: consistency_output(model, x, sigma)[0]


def gradient_variance(model, batch, process_kind, schedule, dist_fn, step=0):
    """Mean-over-parameters sample variance of per-sample loss gradients.

    Per-sample gradients are the batch-of-one gradients at the batch's own
    timesteps; the estimator computes their variance in a single backward
    pass via per-row squared norms.
    """
    if batch.n < 2:
        raise StructuralError("gradient variance needs a batch of at least 2")
    result = consistency_loss(model, batch, process_kind, schedule, dist_fn,
                              want_per_sample_sqnorm=True)
    value = batch_gradient_variance(result, batch.n, model.spec.param_count)
    return VarianceReport(step, value)


def variance_comparison(model, setting, process_kind, schedule, tdist, n, rng,
                        step=0, endpoint_model=None):
    """IC and GC variance reports over a shared (x, z, i) batch.

    `model` supplies the loss gradients; `endpoint_model` (default: same)
    predicts the GC endpoints, e.g. an EMA snapshot.
    """
    x = setting.data_dist.sample(n, rng)
    z = setting.noise_dist.sample(n, rng)
    ic = sample_ic(x, z, tdist, rng)
    gc = induce_gc(endpoint_model if endpoint_model is not None else model,
                   ic, process_kind, schedule)
    dist_fn = DistanceFn.squared_l2()
    return (gradient_variance(model, ic, process_kind, schedule, dist_fn, step),
            gradient_variance(model, gc, process_kind, schedule, dist_fn, step))


def transport_cost(model, setting, process_kind, schedule, n, rng):
    """Quadratic transport cost of reaching each grid point.

    For every grid index t: the independent arm pays ||x - x_t||^2 with
    x_t = a_t x + b_t z; the generator arm predicts the endpoint from the
    same x_t at the same noise level and pays ||x_hat - x~_t||^2 with
    x~_t = a_t x_hat + b_t z. Shared (x, z) across both arms and all t.
    """
    endpoint = _endpoint_fn(model)
    x = setting.data_dist.sample(n, rng)
    z = setting.noise_dist.sample(n, rng)
    grid = schedule.grid
    n_points = len(grid)
    ic_costs = np.empty((n_points, n))
    gc_costs = np.empty((n_points, n))
    for t in range(n_points):
        idx = np.full(n, t, dtype=np.int64)
        x_t = sched.perturb(process_kind, schedule, x, z, idx)
        diff = x - x_t
        ic_costs[t] = np.einsum("ij,ij->i", diff, diff)
        x_hat = endpoint(x_t, grid[idx])
        xt_gc = sched.perturb(process_kind, schedule, x_hat, z, idx)
        diff = x_hat - xt_gc
        gc_costs[t] = np.einsum("ij,ij->i", diff, diff)
    return TransportReport(np.arange(n_points), grid.copy(),
                           ic_costs.mean(axis=1), gc_costs.mean(axis=1),
                           ic_costs, gc_costs)


def trajectory_paths(model, setting, process_kind, schedule, n, rng):
    """Per-sample positions along the forward path for both arms.

    Returns (grid, ic_paths, gc_paths) with paths shaped (N+1, n, d): entry
    [t, j] is x~_t for sample j. Used for trajectory plots; shares (x, z)
    between arms like transport_cost.
    """
    endpoint = _endpoint_fn(model)
    x = setting.data_dist.sample(n, rng)
    z = setting.noise_dist.sample(n, rng)
    n_points = len(schedule.grid)
    ic_paths = np.empty((n_points, n, x.shape[1]))
    gc_paths = np.empty((n_points, n, x.shape[1]))
    for t in range(n_points):
        idx = np.full(n, t, dtype=np.int64)
        x_t = sched.perturb(process_kind, schedule, x, z, idx)
        ic_paths[t] = x_t
        x_hat = endpoint(x_t, schedule.grid[idx])
        gc_paths[t] = sched.perturb(process_kind, schedule, x_hat, z, idx)
    return schedule.grid.copy(), ic_paths, gc_paths


def pfode_distance(model, score_source, setting, process_kind, schedule, tdist,
                   n, rng, step=0):
    """Distance of coupled pairs to one-step probability-flow updates.

    Requires the additive-noise process: the probability-flow update targets
    the data marginal perturbed by sigma-scaled Gaussian noise, which the
    bridge interpolations do not produce.
    """
    if process_kind != sched.EDM:
        raise ConfigError("pfode distance supports the EDM process only")
    endpoint = _endpoint_fn(model)
    score_fn = make_score_fn(score_source)
    x = setting.data_dist.sample(n, rng)
    z = setting.noise_dist.sample(n, rng)
    idx = tdist.sample(n, rng)
    grid = schedule.grid

    ic_dist = np.empty(n)
    gc_dist = np.empty(n)
    intervals = np.unique(idx)
    ic_means = np.empty(len(intervals))
    gc_means = np.empty(len(intervals))
    for pos, i in enumerate(intervals):
        mask = idx == i
        rows = np.flatnonzero(mask)
        sub_idx = idx[rows]
        x_i = sched.perturb(process_kind, schedule, x[rows], z[rows], sub_idx)
        x_next = sched.perturb(process_kind, schedule, x[rows], z[rows], sub_idx + 1)
        ref = euler_pfode_update(score_fn, x_next, grid[i], grid[i + 1])
        ic_dist[rows] = np.linalg.norm(x_i - ref, axis=1)

        x_hat = endpoint(x_i, grid[sub_idx])
        xt_i = sched.perturb(process_kind, schedule, x_hat, z[rows], sub_idx)
        xt_next = sched.perturb(process_kind, schedule, x_hat, z[rows], sub_idx + 1)
        ref_gc = euler_pfode_update(score_fn, xt_next, grid[i], grid[i + 1])
        gc_dist[rows] = np.linalg.norm(xt_i - ref_gc, axis=1)

        ic_means[pos] = ic_dist[rows].mean()
        gc_means[pos] = gc_dist[rows].mean()
    return PfodeDistanceReport(step, float(ic_dist.mean()), float(gc_dist.mean()),
                               intervals, ic_means, gc_means)


def energy_distance(samples_a, samples_b, chunk=4096):
    """2 E||A - B|| - E||A - A'|| - E||B - B'|| via U-statistics."""
    a = np.asarray(samples_a, dtype=np.float64)
    b = np.asarray(samples_b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[0] == 0 or b.shape[0] == 0:
        raise StructuralError("energy distance needs two nonempty 2-d sample sets")
    return (2.0 * _mean_cross(a, b, chunk) - _mean_within(a, chunk)
            - _mean_within(b, chunk))


def _mean_cross(a, b, chunk):
    total = 0.0
    for lo in range(0, a.shape[0], chunk):
        blk = a[lo:lo + chunk]
        d2 = (np.einsum("ij,ij->i", blk, blk)[:, None]
              + np.einsum("ij,ij->i", b, b)[None, :]
              - 2.0 * blk @ b.T)
        total += float(np.sqrt(np.maximum(d2, 0.0)).sum())
    return total / (a.shape[0] * b.shape[0])


def _mean_within(a, chunk):
    n = a.shape[0]
    if n < 2:
        return 0.0
    total = 0.0
    for lo in range(0, n, chunk):
        blk = a[lo:lo + chunk]
        d2 = (np.einsum("ij,ij->i", blk, blk)[:, None]
              + np.einsum("ij,ij->i", a, a)[None, :]
              - 2.0 * blk @ a.T)
        total += float(np.sqrt(np.maximum(d2, 0.0)).sum())
    return total / (n * (n - 1))  # diagonal contributes zero


def mode_balance(samples, mixture):
    """Fraction of samples nearest to each mixture component mean."""
    if mixture.n_components < 2:
        raise StructuralError("mode balance needs at least 2 components")
    samples = np.asarray(samples, dtype=np.float64)
    d2 = ((samples[:, None, :] - mixture.means[None, :, :]) ** 2).sum(axis=2)
    nearest = np.argmin(d2, axis=1)
    return np.bincount(nearest, minlength=mixture.n_components) / samples.shape[0]
