"""Data-noise pairings consumed by the consistency loss.

Three ways to couple a data batch with a noise batch:

  IC  independent pairing with freshly sampled timestep indices;
  GC  generator-induced pairing: the data side is replaced by the model's
      endpoint prediction from the IC batch's own intermediate point, with
      the noise column and timesteps reused unchanged;
  OT  minimum-cost pairing of the two batches under squared distance.

A mixing policy draws one Bernoulli per training step to pick GC over IC for
the whole batch (per-sample mixing is available behind a flag).
"""

from dataclasses import dataclass

import numpy as np

from . import backend, schedule as sched
from .errors import ConfigError, NumericError, StructuralError
from .model import consistency_output

IC = "ic"
GC = "gc"
OT = "ot"


@dataclass
class CouplingBatch:
    x: np.ndarray              # (n, d) data points or generator endpoints
    z: np.ndarray              # (n, d) latents
    timestep: np.ndarray       # (n,) interval indices i
    provenance: str            # "ic" | "gc" | "ot"

    def __post_init__(self):
        if self.x.shape != self.z.shape or self.x.ndim != 2:
            raise StructuralError("x and z must share shape (n, d)")
        if self.timestep.shape != (self.x.shape[0],):
            raise StructuralError("timestep must have shape (n,)")
        if self.provenance not in (IC, GC, OT):
            raise StructuralError(f"unknown provenance {self.provenance!r}")

    @property
    def n(self):
        return self.x.shape[0]


def sample_ic(data_batch, noise_batch, tdist, rng):
    """Independent coupling with per-sample timestep indices from `tdist`."""
    data_batch = np.asarray(data_batch, dtype=np.float64)
    noise_batch = np.asarray(noise_batch, dtype=np.float64)
    if data_batch.shape != noise_batch.shape:
        raise StructuralError("data and noise batches must have equal shapes")
    idx = tdist.sample(data_batch.shape[0], rng)
    return CouplingBatch(data_batch, noise_batch, idx, IC)


def induce_gc(model, ic, process_kind, schedule):
    """Replace the data side by the model's endpoint predictions.

    x_i = perturb(x, z, i) is built from the IC batch, the endpoint
    prediction is f(x_i, sigma_i) with no gradient linkage to the
    parameters, and the result pairs that endpoint with the identical z and
    i. The noise marginal of the output is therefore bitwise the input's.
    """
    if ic.provenance != IC:
        raise StructuralError(f"induce_gc needs an IC batch, got {ic.provenance!r}")
    x_i = sched.perturb(process_kind, schedule, ic.x, ic.z, ic.timestep)
    sigma = schedule.grid[ic.timestep]
    endpoint, _ = consistency_output(model, x_i, sigma)
    if not np.all(np.isfinite(endpoint)):
        raise NumericError("non-finite endpoint prediction")
    return CouplingBatch(endpoint, ic.z, ic.timestep, GC)


def ot_pairing(data_batch, noise_batch):
    """Permutation pi minimizing sum_j ||x_j - z_pi(j)||^2."""
    data_batch = np.asarray(data_batch, dtype=np.float64)
    noise_batch = np.asarray(noise_batch, dtype=np.float64)
    if data_batch.shape != noise_batch.shape:
        raise StructuralError("data and noise batches must have equal shapes")
    diff = data_batch[:, None, :] - noise_batch[None, :, :]
    cost = np.einsum("nmd,nmd->nm", diff, diff)
    return backend.hungarian(cost)


def batch_ot(data_batch, noise_batch, tdist=None, rng=None):
    """Optimal-assignment coupling; timesteps sampled when a sampler is given."""
    data_batch = np.asarray(data_batch, dtype=np.float64)
    noise_batch = np.asarray(noise_batch, dtype=np.float64)
    pi = ot_pairing(data_batch, noise_batch)
    if tdist is not None:
        idx = tdist.sample(data_batch.shape[0], rng)
    else:
        idx = np.zeros(data_batch.shape[0], dtype=np.int64)
    return CouplingBatch(data_batch, noise_batch[pi], idx, OT)


@dataclass(frozen=True)
class MixingPolicy:
    mu: float
    per_sample: bool = False

    def __post_init__(self):
        if not 0.0 <= self.mu <= 1.0:
            raise ConfigError(f"mu must lie in [0, 1], got {self.mu}")


def draw_training_batch(policy, model, data_batch, noise_batch, tdist,
                        process_kind, schedule, rng_timestep, rng_mixing):
    """One training batch under the mixing policy.

    Draws the IC batch first, then flips one coin (per step, or per sample
    when the policy says so) to decide whether the generator-induced variant
    replaces it. mu = 0 never invokes the model; mu = 1 always does.
    """
    ic = sample_ic(data_batch, noise_batch, tdist, rng_timestep)
    if policy.per_sample:
        take_gc = rng_mixing.random(ic.n) < policy.mu
        if not np.any(take_gc):
            return ic
        gc = induce_gc(model, ic, process_kind, schedule)
        x = np.where(take_gc[:, None], gc.x, ic.x)
        return CouplingBatch(x, ic.z, ic.timestep, GC)
    if rng_mixing.random() < policy.mu:
        return induce_gc(model, ic, process_kind, schedule)
    return ic
