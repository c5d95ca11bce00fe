"""Training loops for consistency models under IC, GC, OT, and mixed coupling.

One training step: draw a data minibatch (with replacement from the fixed
pool) and a fresh noise batch, sample per-sample timesteps, build the
coupling batch, evaluate the adjacent-pair consistency loss, and apply the
optimizer plus EMA update. The loss for each sample is

    lambda(sigma_i) * D(sg(f(x~_i, sigma_i)), f(x~_{i+1}, sigma_{i+1}))

with lambda(sigma_i) = 1/(sigma_{i+1} - sigma_i) and the gradient flowing
only through the higher-noise branch.
"""

import json
from dataclasses import asdict, dataclass

import numpy as np

from . import nn, rng as rng_mod, schedule as sched
from .coupling import GC, MixingPolicy, batch_ot, draw_training_batch
from .data import make_setting
from .errors import ConfigError, NumericError, StructuralError
from .model import ConsistencyModel, DistanceFn, consistency_output, distance, distance_vjp
from .optim import EmaTracker, make_optimizer

DIVERGENCE_LIMIT = 1e8


@dataclass
class TrainConfig:
    # experiment
    setting: str = "1m-2m"
    n_samples: int = 10000
    data_std: float = 0.2
    noise_std: float = 0.2
    data_means: tuple = None
    noise_means: tuple = None
    process: str = sched.EDM
    # schedule
    sigma_min: float = 0.001
    sigma_max: float = 1.0
    rho: float = 3.0
    curriculum: str = "fixed"  # "fixed" | "exponential"
    n_steps_fixed: int = 30
    s0: int = 10
    s1: int = 1280
    timestep_distribution: str = "erf"  # "erf" | "uniform"
    p_mean: float = -1.1
    p_std: float = 2.0
    # model
    hidden_dim: int = 256
    depth: int = 4
    distance: str = "sq_l2"  # "sq_l2" | "pseudo_huber"
    sigma_data: float = 0.0  # 0 -> derive from the data mixture
    # optimizer
    optimizer: str = "adam"
    lr: float = 5e-5
    ema_decay: float = 0.999
    max_grad_norm: float = 0.0  # 0 -> no clipping
    # coupling
    mu: float = 0.0
    use_ema_for_gc: bool = True
    per_sample_mix: bool = False
    coupling: str = "mix"  # "mix" | "ot"
    # run
    seed: int = 0
    batch_size: int = 512
    total_steps: int = 10000
    metric_interval: int = 50
    checkpoint_interval: int = 500
    model_kind: str = "consistency"  # "consistency" | "score"

    def __post_init__(self):
        if self.process not in sched.PROCESS_KINDS:
            raise ConfigError(f"unknown process {self.process!r}")
        if self.coupling not in ("mix", "ot"):
            raise ConfigError(f"unknown coupling mode {self.coupling!r}")
        if self.timestep_distribution not in ("erf", "uniform"):
            raise ConfigError(
                f"unknown timestep distribution {self.timestep_distribution!r}")
        if self.model_kind not in ("consistency", "score"):
            raise ConfigError(f"unknown model kind {self.model_kind!r}")
        if not 0.0 <= self.mu <= 1.0:
            raise ConfigError(f"mu must lie in [0, 1], got {self.mu}")
        if self.batch_size < 1 or self.total_steps < 1:
            raise ConfigError("batch_size and total_steps must be >= 1")
        if self.lr <= 0.0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.metric_interval < 1 or self.checkpoint_interval < 1:
            raise ConfigError("intervals must be >= 1")

    def build_setting(self):
        return make_setting(self.setting, self.n_samples, self.data_std,
                            self.noise_std, self.data_means, self.noise_means)

    def build_curriculum(self):
        if self.curriculum == "fixed":
            return sched.Curriculum.fixed(self.n_steps_fixed, self.total_steps)
        return sched.Curriculum.exponential(self.s0, self.s1, self.total_steps)

    def build_distance(self):
        if self.distance == "pseudo_huber":
            return DistanceFn.pseudo_huber(2)
        return DistanceFn.squared_l2()

    def network_spec(self):
        return nn.NetworkSpec(2, self.hidden_dim, self.depth, 2)


@dataclass
class LossResult:
    loss: float
    grads: np.ndarray
    target: np.ndarray
    per_sample_sqnorm: np.ndarray = None


def consistency_loss(model, batch, process_kind, schedule, dist_fn,
                     want_grads=True, want_per_sample_sqnorm=False,
                     frozen_target=None):
    """Adjacent-pair consistency loss over a coupling batch.

    Both branches share the batch's (x-or-endpoint, z, i); the target branch
    at sigma_i is treated as a constant (stop-gradient), so the returned
    gradient flows only through the sigma_{i+1} branch. Passing
    frozen_target reuses a previously computed target batch, which is what
    finite-difference checks need to hold the target fixed while varying
    the parameters.
    """
    idx = batch.timestep
    if np.any(idx < 0) or np.any(idx >= schedule.n_intervals):
        raise StructuralError("timestep index outside the schedule's intervals")
    n = batch.n
    sig_i = schedule.grid[idx]
    sig_next = schedule.grid[idx + 1]
    lam = 1.0 / (sig_next - sig_i)

    x_next = sched.perturb(process_kind, schedule, batch.x, batch.z, idx + 1)
    if frozen_target is None:
        x_i = sched.perturb(process_kind, schedule, batch.x, batch.z, idx)
        stacked_x = np.concatenate([x_i, x_next])
        stacked_sig = np.concatenate([sig_i, sig_next])
        y, tape = consistency_output(model, stacked_x, stacked_sig,
                                     want_tape=want_grads)
        target = y[:n]
        live = y[n:]
        live_tape = tape.rows(slice(n, 2 * n)) if want_grads else None
    else:
        target = frozen_target
        live, tape = consistency_output(model, x_next, sig_next, want_tape=want_grads)
        live_tape = tape

    per_sample = lam * distance(dist_fn, target, live)
    loss = float(np.mean(per_sample))
    if not want_grads:
        return LossResult(loss, None, target)

    c_out = model.c_out(sig_next)
    cot = (lam * c_out / n)[:, None] * distance_vjp(dist_fn, target, live)
    res = nn.backward(model.spec, model.params, live_tape, cot,
                      want_per_sample_sqnorm=want_per_sample_sqnorm)
    return LossResult(loss, res["grads"], target,
                      res.get("per_sample_sqnorm"))


def batch_gradient_variance(result, n, n_params):
    """Mean over parameters of the per-sample gradient variance.

    Uses the identity sum_j ||g_j||^2 = n^2 * sum_j q_j, where q_j is the
    per-row squared norm computed with mean-loss cotangents, and g_j the
    gradient of sample j's unaveraged loss; the mean gradient is the batch
    gradient itself.
    """
    if result.per_sample_sqnorm is None:
        raise StructuralError("loss result lacks per-sample norms")
    if n < 2:
        raise StructuralError("variance needs a batch of at least 2")
    total_sq = n * n * float(np.sum(result.per_sample_sqnorm))
    mean_sq = float(result.grads @ result.grads)
    return max((total_sq - n * mean_sq) / ((n - 1) * n_params), 0.0)


@dataclass
class StepMetrics:
    step: int
    loss: float
    grad_variance: float
    used_gc: bool
    n_intervals: int


class Trainer:
    """Owns the mutable training state for one run."""

    def __init__(self, config):
        if config.model_kind != "consistency":
            raise ConfigError("Trainer handles consistency models; "
                              "use score.train_score for score models")
        self.config = config
        self.streams = rng_mod.make_streams(config.seed)
        self.setting = config.build_setting()
        self.pool = self.setting.data_dist.sample(config.n_samples,
                                                  self.streams["data_pool"])
        self.sigma_data = (config.sigma_data if config.sigma_data > 0.0
                           else self.setting.data_dist.marginal_std())
        self.spec = config.network_spec()
        self.params = nn.init_params(self.spec, self.streams["init"])
        self.curriculum = config.build_curriculum()
        self.dist_fn = config.build_distance()
        self.policy = MixingPolicy(config.mu, config.per_sample_mix)
        self.optimizer = make_optimizer(config.optimizer, config.lr)
        self.ema = EmaTracker(config.ema_decay, self.params.copy())
        self.step_count = 0
        self._schedule_cache = {}

    def schedule_for(self, n_intervals):
        cached = self._schedule_cache.get(n_intervals)
        if cached is None:
            schedule = sched.build_schedule(self.config.sigma_min,
                                            self.config.sigma_max,
                                            self.config.rho, n_intervals)
            if self.config.timestep_distribution == "erf":
                tdist = sched.erf_timestep_distribution(
                    schedule, self.config.p_mean, self.config.p_std)
            else:
                tdist = sched.uniform_timestep_distribution(schedule)
            cached = (schedule, tdist)
            self._schedule_cache[n_intervals] = cached
        return cached

    def model(self, use_ema=False):
        params = self.ema.params if use_ema else self.params
        n = self.curriculum.n_intervals(min(self.step_count,
                                            self.config.total_steps - 1))
        schedule, _ = self.schedule_for(n)
        return ConsistencyModel(self.spec, params, self.sigma_data, schedule)

    def step(self):
        cfg = self.config
        k = self.step_count
        schedule, tdist = self.schedule_for(self.curriculum.n_intervals(k))
        rows = self.streams["data"].integers(0, cfg.n_samples, size=cfg.batch_size)
        xb = self.pool[rows]
        zb = self.setting.noise_dist.sample(cfg.batch_size, self.streams["noise"])

        live = ConsistencyModel(self.spec, self.params, self.sigma_data, schedule)
        if cfg.coupling == "ot":
            batch = batch_ot(xb, zb, tdist, self.streams["timestep"])
        else:
            endpoint_model = (ConsistencyModel(self.spec, self.ema.params,
                                               self.sigma_data, schedule)
                              if cfg.use_ema_for_gc else live)
            batch = draw_training_batch(self.policy, endpoint_model, xb, zb,
                                        tdist, cfg.process, schedule,
                                        self.streams["timestep"],
                                        self.streams["mixing"])

        result = consistency_loss(live, batch, cfg.process, schedule,
                                  self.dist_fn, want_per_sample_sqnorm=True)
        if not np.isfinite(result.loss) or result.loss > DIVERGENCE_LIMIT:
            raise NumericError(
                f"training diverged at step {k + 1} (loss={result.loss})",
                context={"step": k + 1, "loss": result.loss,
                         "param_norm": float(np.linalg.norm(self.params))})
        variance = batch_gradient_variance(result, batch.n, self.spec.param_count)
        grads = result.grads
        if cfg.max_grad_norm > 0.0:
            gnorm = float(np.linalg.norm(grads))
            if gnorm > cfg.max_grad_norm:
                grads = grads * (cfg.max_grad_norm / gnorm)
        self.optimizer.step(self.params, grads)
        self.ema.update(self.params)
        self.step_count += 1
        return StepMetrics(self.step_count, result.loss, variance,
                           batch.provenance == GC, schedule.n_intervals)

    def run(self, on_metrics=None, on_checkpoint=None):
        """Drive step() to total_steps, emitting metric rows and checkpoints.

        on_metrics receives lists of (step, name, value) tuples; on_checkpoint
        receives (step, trainer). Checkpoints land every checkpoint_interval
        steps and at the end.
        """
        cfg = self.config
        records = []
        while self.step_count < cfg.total_steps:
            m = self.step()
            if m.step % cfg.metric_interval == 0 or m.step == cfg.total_steps:
                rows = [(m.step, "loss", m.loss),
                        (m.step, "grad_variance", m.grad_variance),
                        (m.step, "coupling_gc", float(m.used_gc)),
                        (m.step, "n_intervals", float(m.n_intervals))]
                records.extend(rows)
                if on_metrics is not None:
                    on_metrics(rows)
            if on_checkpoint is not None and (
                    m.step % cfg.checkpoint_interval == 0
                    or m.step == cfg.total_steps):
                on_checkpoint(m.step, self)
        return records

    def generate(self, n=None, noise=None, rng=None, use_ema=True):
        """One-step samples from the noise distribution; see one_step_generate."""
        if noise is None:
            if n is None:
                raise StructuralError("generate needs n or an explicit noise batch")
            noise = self.setting.noise_dist.sample(
                n, rng if rng is not None else self.streams["eval"])
        return one_step_generate(self.model(use_ema=use_ema),
                                 self.config.process, noise)


def one_step_generate(model, process_kind, noise):
    """One-step samples: f(b_N * z, sigma_max).

    The data-side coefficient at the top of the grid is dropped, so the
    generator needs no data at inference; under the additive-noise process
    b_N * z is exactly the terminal perturbation of x = 0.
    """
    noise = np.asarray(noise, dtype=np.float64)
    schedule = model.schedule
    _a, b = sched.process_coefficients(process_kind,
                                       np.asarray([schedule.sigma_max]))
    x_in = b[0] * noise
    sig = np.full(x_in.shape[0], schedule.sigma_max)
    out, _ = consistency_output(model, x_in, sig)
    return out


def train(config, on_metrics=None, on_checkpoint=None):
    """Run a full training; returns (trainer, metric records)."""
    trainer = Trainer(config)
    records = trainer.run(on_metrics=on_metrics, on_checkpoint=on_checkpoint)
    return trainer, records


def save_state(trainer, path):
    """Serialize the full mutable state; resuming reproduces the run exactly."""
    opt = trainer.optimizer
    arrays = {"params": trainer.params, "ema": trainer.ema.params,
              "opt_m": opt.m if opt.m is not None else np.zeros(0)}
    if hasattr(opt, "v"):
        arrays["opt_v"] = opt.v if opt.v is not None else np.zeros(0)
    meta = {
        "step_count": trainer.step_count,
        "opt_step_count": opt.step_count,
        "config": asdict(trainer.config),
        "rng": {name: gen.bit_generator.state
                for name, gen in trainer.streams.items()},
    }
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.frombuffer(
            json.dumps(meta).encode("utf-8"), dtype=np.uint8), **arrays)


def load_state(path):
    """Rebuild a Trainer from save_state output."""
    with np.load(path) as blob:
        meta = json.loads(bytes(blob["meta"]).decode("utf-8"))
        arrays = {k: blob[k] for k in blob.files if k != "meta"}
    cfg_dict = meta["config"]
    for key in ("data_means", "noise_means"):
        if cfg_dict.get(key) is not None:
            cfg_dict[key] = tuple(tuple(p) for p in cfg_dict[key])
    trainer = Trainer(TrainConfig(**cfg_dict))
    trainer.params[:] = arrays["params"]
    trainer.ema.params[:] = arrays["ema"]
    opt = trainer.optimizer
    opt.step_count = meta["opt_step_count"]
    if arrays["opt_m"].size:
        opt.m = arrays["opt_m"].copy()
    if "opt_v" in arrays and arrays["opt_v"].size:
        opt.v = arrays["opt_v"].copy()
    trainer.step_count = meta["step_count"]
    for name, state in meta["rng"].items():
        trainer.streams[name].bit_generator.state = state
    return trainer
