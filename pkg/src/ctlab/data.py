"""Synthetic Gaussian-mixture distributions and their perturbed scores.

Two experiment settings are built in. Both use a two-mode data distribution
with modes at (2, 2) and (2, -2); the noise distribution is a standard
normal at the origin ("1m-2m") or a two-mode mixture at (-2, -2) and
(-2, 2) ("2m-2m"), placed so that straight data-noise pairings cross.

Adding isotropic noise of scale sigma to a mixture yields another mixture
with component covariances Sigma_k + sigma^2 I, so the perturbed density and
its score have closed forms. All mixture math is kept exact; diagnostics
lean on it as an oracle.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, StructuralError

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class GaussianMixture:
    means: np.ndarray    # (k, d)
    covs: np.ndarray     # (k, d, d), symmetric positive definite
    weights: np.ndarray  # (k,), positive, sums to 1

    def __post_init__(self):
        means = np.asarray(self.means, dtype=np.float64)
        covs = np.asarray(self.covs, dtype=np.float64)
        weights = np.asarray(self.weights, dtype=np.float64)
        if means.ndim != 2:
            raise StructuralError("means must have shape (k, d)")
        k, d = means.shape
        if covs.shape != (k, d, d):
            raise StructuralError(f"covs must have shape ({k}, {d}, {d})")
        if weights.shape != (k,):
            raise StructuralError(f"weights must have shape ({k},)")
        if np.any(weights <= 0.0) or abs(weights.sum() - 1.0) > 1e-12:
            raise ConfigError("mixture weights must be positive and sum to 1")
        if not np.allclose(covs, np.swapaxes(covs, 1, 2), atol=0.0):
            raise ConfigError("covariances must be symmetric")
        try:
            chols = np.linalg.cholesky(covs)
        except np.linalg.LinAlgError:
            raise ConfigError("covariances must be positive definite") from None
        for arr in (means, covs, weights):
            arr.setflags(write=False)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covs", covs)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "_chols", chols)

    @staticmethod
    def isotropic(means, std, weights=None):
        means = np.asarray(means, dtype=np.float64)
        k, d = means.shape
        covs = np.repeat((std ** 2 * np.eye(d))[None], k, axis=0)
        if weights is None:
            weights = np.full(k, 1.0 / k)
        return GaussianMixture(means, covs, np.asarray(weights, dtype=np.float64))

    @property
    def dim(self):
        return self.means.shape[1]

    @property
    def n_components(self):
        return self.means.shape[0]

    def sample(self, n, rng):
        """n i.i.d. draws: component by weight, then a Gaussian draw."""
        if n < 0:
            raise StructuralError(f"sample count must be >= 0, got {n}")
        comp = rng.choice(self.n_components, size=n, p=self.weights)
        eps = rng.standard_normal((n, self.dim))
        return self.means[comp] + np.einsum("nij,nj->ni", self._chols[comp], eps)

    def marginal_std(self):
        """sqrt of the average per-coordinate variance of the mixture."""
        mean = self.weights @ self.means
        second = np.einsum("k,kij->ij", self.weights, self.covs)
        second += np.einsum("k,ki,kj->ij", self.weights, self.means, self.means)
        total_cov = second - np.outer(mean, mean)
        return math.sqrt(np.trace(total_cov) / self.dim)

    def _component_logpdfs(self, x, sigma):
        """Per-component log densities and solved residuals at noise scale sigma.

        Returns (logp (n, k), sol (n, k, d)) where sol[j, k] =
        (Sigma_k + sigma^2 I)^-1 (x_j - mu_k).
        """
        d = self.dim
        covs = self.covs + (sigma * sigma) * np.eye(d)
        inv = np.linalg.inv(covs)
        _sign, logdet = np.linalg.slogdet(covs)
        diff = x[:, None, :] - self.means[None, :, :]
        sol = np.einsum("kij,nkj->nki", inv, diff)
        quad = np.einsum("nki,nki->nk", diff, sol)
        logp = np.log(self.weights)[None, :] - 0.5 * (quad + logdet[None, :] + d * _LOG_2PI)
        return logp, sol

    def log_perturbed_density(self, x, sigma):
        """log of the density of (mixture + N(0, sigma^2 I)) at each row of x."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        logp, _sol = self._component_logpdfs(x, float(sigma))
        m = logp.max(axis=1)
        return m + np.log(np.exp(logp - m[:, None]).sum(axis=1))

    def perturbed_score(self, x, sigma):
        """Gradient of log_perturbed_density with respect to x.

        sigma may be a scalar or a per-sample vector; per-sample values are
        handled by grouping equal sigmas, so grid-valued vectors stay cheap.
        """
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        sigma_arr = np.asarray(sigma, dtype=np.float64)
        if sigma_arr.ndim == 0:
            return self._score_at(x, float(sigma_arr))
        if sigma_arr.shape != (x.shape[0],):
            raise StructuralError("per-sample sigma must match the batch size")
        out = np.empty_like(x)
        for value in np.unique(sigma_arr):
            mask = sigma_arr == value
            out[mask] = self._score_at(x[mask], float(value))
        return out

    def _score_at(self, x, sigma):
        logp, sol = self._component_logpdfs(x, sigma)
        m = logp.max(axis=1, keepdims=True)
        resp = np.exp(logp - m)
        resp /= resp.sum(axis=1, keepdims=True)
        return -np.einsum("nk,nki->ni", resp, sol)


@dataclass(frozen=True)
class ExperimentSetting:
    name: str
    data_dist: GaussianMixture
    noise_dist: GaussianMixture
    n_samples: int

    def __post_init__(self):
        if self.name == "1m-2m" and self.noise_dist.n_components != 1:
            raise ConfigError("1m-2m requires a single-component noise distribution")
        if self.name == "2m-2m" and self.noise_dist.n_components != 2:
            raise ConfigError("2m-2m requires a two-component noise distribution")
        if self.n_samples < 1:
            raise ConfigError("n_samples must be >= 1")


DEFAULT_DATA_MEANS = ((2.0, 2.0), (2.0, -2.0))
DEFAULT_NOISE_MEANS = ((-2.0, -2.0), (-2.0, 2.0))


def make_setting(name, n_samples=10000, data_std=0.2, noise_std=0.2,
                 data_means=None, noise_means=None):
    """Build one of the named settings with optional geometry overrides."""
    if name not in ("1m-2m", "2m-2m"):
        raise ConfigError(f"unknown setting {name!r} (expected '1m-2m' or '2m-2m')")
    data = GaussianMixture.isotropic(
        np.asarray(data_means if data_means is not None else DEFAULT_DATA_MEANS), data_std)
    if name == "1m-2m":
        noise = GaussianMixture.isotropic(np.zeros((1, 2)), 1.0)
    else:
        noise = GaussianMixture.isotropic(
            np.asarray(noise_means if noise_means is not None else DEFAULT_NOISE_MEANS),
            noise_std)
    return ExperimentSetting(name, data, noise, n_samples)


def sample(dist, n, rng):
    return dist.sample(n, rng)


def analytic_perturbed_score(dist, x, sigma):
    return dist.perturbed_score(x, sigma)


def dump_samples_csv(path, samples, labels=None):
    """Write samples as CSV with header x0,x1 (plus mode when labeled)."""
    samples = np.asarray(samples, dtype=np.float64).reshape(-1, 2)
    with open(path, "w", encoding="utf-8") as fh:
        if labels is None:
            fh.write("x0,x1\n")
            for row in samples:
                fh.write(f"{float(row[0])!r},{float(row[1])!r}\n")
        else:
            fh.write("x0,x1,mode\n")
            for row, lab in zip(samples, labels):
                fh.write(f"{float(row[0])!r},{float(row[1])!r},{int(lab)}\n")
