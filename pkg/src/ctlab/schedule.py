"""Noise grids, discretization curriculum, timestep sampling, perturbation.

The noise grid follows the rho-warped interpolation

    sigma_i = (sigma_min^(1/rho) + (i/N) (sigma_max^(1/rho) - sigma_min^(1/rho)))^rho

for i = 0..N, increasing, with the endpoints pinned to sigma_min/sigma_max
exactly. Intervals are indexed 0..N-1; interval i spans [sigma_i,
sigma_{i+1}].
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import ConfigError, NumericError, StructuralError, UsageError

# Forward-process kinds. EDM adds noise on top of the clean point; the bridge
# kinds interpolate between the clean point and the latent with coefficients
# that sum to one.
EDM = "edm"
BRIDGE = "bridge"
BRIDGE_GAUSSIAN_APPENDIX = "bridge_gaussian_appendix"
PROCESS_KINDS = (EDM, BRIDGE, BRIDGE_GAUSSIAN_APPENDIX)


@dataclass(frozen=True)
class NoiseSchedule:
    sigma_min: float
    sigma_max: float
    rho: float
    grid: np.ndarray

    @property
    def n_intervals(self):
        return len(self.grid) - 1


def build_schedule(sigma_min, sigma_max, rho, n_intervals):
    if not (0.0 < sigma_min < sigma_max < math.inf):
        raise ConfigError(f"need 0 < sigma_min < sigma_max, got [{sigma_min}, {sigma_max}]")
    if not (0.0 < rho < math.inf):
        raise ConfigError(f"rho must be positive and finite, got {rho}")
    if n_intervals < 1:
        raise ConfigError(f"n_intervals must be >= 1, got {n_intervals}")
    inv_rho = 1.0 / rho
    lo = sigma_min ** inv_rho
    hi = sigma_max ** inv_rho
    ramp = np.arange(n_intervals + 1) / n_intervals
    grid = (lo + ramp * (hi - lo)) ** rho
    grid[0] = sigma_min
    grid[-1] = sigma_max
    if not np.all(np.diff(grid) > 0.0):
        raise NumericError("noise grid is not strictly increasing")
    grid.setflags(write=False)
    return NoiseSchedule(sigma_min, sigma_max, rho, grid)


@dataclass(frozen=True)
class Curriculum:
    """Number of grid intervals N as a function of the training step.

    Exponential mode doubles a base count every K' steps until it saturates:

        N(k) = min(s0 * 2^floor(k / K'), s1) + 1
        K' = floor(total_steps / (log2(s1 / s0) + 1))

    Fixed mode returns the same N for every step.
    """

    mode: str  # "exponential" | "fixed"
    total_steps: int
    s0: int = 0
    s1: int = 0
    fixed_n: int = 0

    def __post_init__(self):
        if self.total_steps < 1:
            raise ConfigError(f"total_steps must be >= 1, got {self.total_steps}")
        if self.mode == "exponential":
            if not (1 <= self.s0 <= self.s1):
                raise ConfigError(f"need 1 <= s0 <= s1, got s0={self.s0} s1={self.s1}")
        elif self.mode == "fixed":
            if self.fixed_n < 1:
                raise ConfigError(f"fixed N must be >= 1, got {self.fixed_n}")
        else:
            raise ConfigError(f"unknown curriculum mode {self.mode!r}")

    @staticmethod
    def exponential(s0, s1, total_steps):
        return Curriculum("exponential", total_steps, s0=s0, s1=s1)

    @staticmethod
    def fixed(n_intervals, total_steps):
        return Curriculum("fixed", total_steps, fixed_n=n_intervals)

    def n_intervals(self, k):
        """Grid interval count N(k) at step k (the grid then has N+1 points)."""
        if k < 0 or k >= self.total_steps:
            raise UsageError(f"step {k} outside [0, {self.total_steps})")
        if self.mode == "fixed":
            return self.fixed_n
        k_prime = math.floor(self.total_steps / (math.log2(self.s1 / self.s0) + 1.0))
        doublings = k // k_prime if k_prime > 0 else 0
        return min(self.s0 * 2 ** doublings, self.s1) + 1


def curriculum_n(curriculum, k):
    return curriculum.n_intervals(k)


@dataclass(frozen=True)
class TimestepDistribution:
    """Discrete distribution over grid intervals 0..N-1."""

    kind: str
    p_mean: float
    p_std: float
    probs: np.ndarray

    def sample(self, n, rng):
        return rng.choice(len(self.probs), size=n, p=self.probs).astype(np.int64)


def erf_timestep_distribution(schedule, p_mean=-1.1, p_std=2.0):
    """Interval probabilities from a lognormal profile over sigma.

    p(i) is proportional to erf((ln sigma_{i+1} - p_mean) / (sqrt(2) p_std))
    - erf((ln sigma_i - p_mean) / (sqrt(2) p_std)), the mass a lognormal
    places on the interval.
    """
    if p_std <= 0.0:
        raise ConfigError(f"p_std must be positive, got {p_std}")
    z = (np.log(schedule.grid) - p_mean) / (math.sqrt(2.0) * p_std)
    mass = special.erf(z[1:]) - special.erf(z[:-1])
    if not np.all(mass > 0.0):
        raise NumericError("timestep interval with non-positive mass")
    probs = mass / mass.sum()
    probs.setflags(write=False)
    return TimestepDistribution("erf_lognormal", p_mean, p_std, probs)


def uniform_timestep_distribution(schedule):
    n = schedule.n_intervals
    probs = np.full(n, 1.0 / n)
    probs.setflags(write=False)
    return TimestepDistribution("uniform", 0.0, math.inf, probs)


def loss_weights(schedule):
    """Per-interval loss weight 1 / (sigma_{i+1} - sigma_i)."""
    return 1.0 / np.diff(schedule.grid)


def process_coefficients(kind, sigma):
    """Forward-process coefficients (a, b) with x_noisy = a*x + b*z.

    EDM: a = 1, b = sigma. Bridge: a = 1/(1+sigma), b = sigma/(1+sigma).
    The bridge_gaussian_appendix variant interpolates linearly in sigma
    itself, a = 1 - sigma, b = sigma, and is defined on sigma <= 1; at
    sigma = 1 the intermediate point is exactly the latent. All kinds share
    the same orientation: the clean point dominates at sigma_min and the
    latent at sigma_max.

    For the bridge kinds a + b == 1 holds exactly in floating point: the
    coefficient >= 1/2 is computed from its own formula and the smaller one
    as its complement, which is an exact subtraction for values in [1/2, 1].
    The complement can therefore differ from its literal formula by up to
    one ulp of 1 in absolute terms.
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    if not (np.all(np.isfinite(sigma)) and np.all(sigma >= 0.0)):
        raise NumericError("sigma must be finite and non-negative")
    if kind == EDM:
        return np.ones_like(sigma), sigma.copy()
    if kind == BRIDGE:
        a_nat = 1.0 / (1.0 + sigma)
        b_nat = sigma / (1.0 + sigma)
        big_is_a = a_nat >= 0.5
        a = np.where(big_is_a, a_nat, 1.0 - b_nat)
        b = np.where(big_is_a, 1.0 - a_nat, b_nat)
        return a, b
    if kind == BRIDGE_GAUSSIAN_APPENDIX:
        if np.any(sigma > 1.0):
            raise UsageError("the linear bridge requires sigma <= 1")
        a = 1.0 - sigma
        b = np.where(sigma >= 0.5, sigma, 1.0 - a)
        return a, b
    raise ConfigError(f"unknown forward process {kind!r}")


def perturb(kind, schedule, x, z, idx):
    """Noisy point a_i * x + b_i * z at grid index idx (per sample)."""
    x = np.asarray(x, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    idx = np.asarray(idx)
    if x.shape != z.shape or x.ndim != 2:
        raise StructuralError(f"x and z must share shape (n, d), got {x.shape} / {z.shape}")
    if idx.shape != (x.shape[0],) or not np.issubdtype(idx.dtype, np.integer):
        raise StructuralError("idx must be an integer array of shape (n,)")
    if np.any(idx < 0) or np.any(idx >= len(schedule.grid)):
        raise UsageError("grid index out of range")
    a, b = process_coefficients(kind, schedule.grid[idx])
    return a[:, None] * x + b[:, None] * z
