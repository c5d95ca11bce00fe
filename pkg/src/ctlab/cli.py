"""Command-line entry point.

Commands:

    train    --config cfg.ini [--seed N] --out DIR
    diagnose {variance|transport|pfode} --checkpoint F [--checkpoint F ...]
             --config cfg.ini --out DIR [--n N] [--seed N]
             [--analytic-score | --score-checkpoint F] [--trajectories N]
    sample   --checkpoint F --n N --seed N --out FILE
    eval     --checkpoint F --config cfg.ini --out FILE [--n N] [--seed N]

Exit codes: 0 success, 2 configuration/structural/usage error, 3 numeric
failure, 4 I/O failure. CTLAB_LOG=debug|info|warning|error sets verbosity.

CSV schemas (all files start with a header; floats are written with full
round-trip precision):

    metrics.csv      step,metric,value
    samples          x0,x1
    variance.csv     step,ic_variance,gc_variance
    transport.csv    timestep,sigma,ic_cost,gc_cost
    trajectories.csv arm,sample,timestep,sigma,x0,x1
    pfode.csv        step,ic_distance,gc_distance
    eval summary     n,energy_distance,mode_balance_0,mode_balance_1
"""

import argparse
import datetime
import json
import logging
import os
import sys
from dataclasses import replace

import numpy as np

from . import __version__, backend, ckpt, rng as rng_mod
from .config import load_config
from .data import GaussianMixture, dump_samples_csv
from .diagnostics import (energy_distance, mode_balance, pfode_distance,
                          trajectory_paths, transport_cost, variance_comparison)
from .errors import ConfigError, CtlabError, NumericError, StructuralError
from .schedule import EDM, build_schedule, erf_timestep_distribution, \
    uniform_timestep_distribution
from .score import ScoreTrainer
from .train import Trainer, one_step_generate

log = logging.getLogger("ctlab")


def _setup_logging():
    levels = {"debug": logging.DEBUG, "info": logging.INFO,
              "warning": logging.WARNING, "error": logging.ERROR}
    name = os.environ.get("CTLAB_LOG", "warning").strip().lower()
    logging.basicConfig(level=levels.get(name, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _fmt(value):
    return repr(float(value))


def _write_json_atomic(path, payload):
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    os.replace(tmp, path)


def _now():
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def _final_schedule(cfg):
    n = cfg.build_curriculum().n_intervals(cfg.total_steps - 1)
    return build_schedule(cfg.sigma_min, cfg.sigma_max, cfg.rho, n)


def _tdist_for(cfg, schedule):
    if cfg.timestep_distribution == "erf":
        return erf_timestep_distribution(schedule, cfg.p_mean, cfg.p_std)
    return uniform_timestep_distribution(schedule)


def _check_architecture(checkpoint, cfg):
    spec = cfg.network_spec()
    meta = checkpoint.meta
    for key, want in (("input_dim", spec.input_dim), ("hidden_dim", spec.hidden_dim),
                      ("depth", spec.depth), ("output_dim", spec.output_dim)):
        if meta.get(key) != want:
            raise StructuralError(
                f"checkpoint architecture mismatch: {key} is {meta.get(key)}, "
                f"config expects {want}")


def _eval_rng(args, cfg):
    seed = args.seed if args.seed is not None else cfg.seed
    return rng_mod.stream(seed, "eval")


# ---------------------------------------------------------------- train


def cmd_train(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    with open(args.config, "r", encoding="utf-8") as fh:
        config_text = fh.read()

    os.makedirs(args.out, exist_ok=True)
    ckpt_dir = os.path.join(args.out, "checkpoints")
    os.makedirs(ckpt_dir, exist_ok=True)
    manifest_path = os.path.join(args.out, "manifest.json")
    manifest = {
        "config_path": str(args.config),
        "config_text": config_text,
        "seed": cfg.seed,
        "started_at": _now(),
        "ended_at": None,
        "version": __version__,
        "backend": backend.name,
        "artifacts": {"metrics": "metrics.csv", "checkpoints": "checkpoints"},
    }
    _write_json_atomic(manifest_path, manifest)

    trainer = Trainer(cfg) if cfg.model_kind == "consistency" else ScoreTrainer(cfg)

    def on_checkpoint(step, state):
        schedule = state.model(use_ema=True).schedule
        meta = ckpt.metadata_for(state.spec, schedule, state.sigma_data, step,
                                 cfg.process, setting=state.setting)
        path = os.path.join(ckpt_dir, f"step_{step:06d}.ckpt")
        ckpt.save_checkpoint(path, cfg.model_kind, meta, state.params,
                             state.ema.params)
        log.info("checkpoint written: %s", path)

    metrics_path = os.path.join(args.out, "metrics.csv")
    with open(metrics_path, "w", encoding="utf-8") as metrics_fh:
        metrics_fh.write("step,metric,value\n")

        def on_metrics(rows):
            for step, name, value in rows:
                metrics_fh.write(f"{step},{name},{_fmt(value)}\n")

        try:
            trainer.run(on_metrics=on_metrics, on_checkpoint=on_checkpoint)
        except NumericError as exc:
            dump_path = os.path.join(args.out, "divergence.json")
            _write_json_atomic(dump_path, {"error": str(exc), "context": exc.context})
            print(f"error: {exc} (dump: {dump_path})", file=sys.stderr)
            return exc.exit_code

    manifest["ended_at"] = _now()
    _write_json_atomic(manifest_path, manifest)
    log.info("run complete: %s", args.out)
    return 0


# ------------------------------------------------------------- diagnose


def _load_checkpoints(paths, cfg, kind):
    out = []
    for path in paths:
        c = ckpt.load_checkpoint(path)
        if c.kind != kind:
            raise StructuralError(f"{path}: expected a {kind} checkpoint, got {c.kind}")
        _check_architecture(c, cfg)
        out.append(c)
    out.sort(key=lambda c: c.meta.get("step", 0))
    return out


def cmd_diagnose(args):
    cfg = load_config(args.config)
    os.makedirs(args.out, exist_ok=True)
    setting = cfg.build_setting()
    schedule = _final_schedule(cfg)
    tdist = _tdist_for(cfg, schedule)
    checkpoints = _load_checkpoints(args.checkpoint, cfg, "consistency")
    seed = args.seed if args.seed is not None else cfg.seed

    if args.kind == "variance":
        n = args.n if args.n is not None else cfg.batch_size
        rows = []
        for c in checkpoints:
            live = ckpt.rebuild_consistency(c, use_ema=False)
            endpoint = ckpt.rebuild_consistency(c, use_ema=cfg.use_ema_for_gc)
            rng = rng_mod.stream(seed, "eval")
            ic_rep, gc_rep = variance_comparison(
                live, setting, cfg.process, schedule, tdist, n, rng,
                step=c.meta.get("step", 0), endpoint_model=endpoint)
            rows.append((ic_rep.step, ic_rep.variance, gc_rep.variance))
        path = os.path.join(args.out, "variance.csv")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("step,ic_variance,gc_variance\n")
            for step, ic_v, gc_v in rows:
                fh.write(f"{step},{_fmt(ic_v)},{_fmt(gc_v)}\n")
        return 0

    if args.kind == "transport":
        c = checkpoints[-1]
        # the model's only role here is predicting GC endpoints, so it uses
        # the same weights the training endpoint used
        model = ckpt.rebuild_consistency(c, use_ema=cfg.use_ema_for_gc)
        n = args.n if args.n is not None else 4096
        report = transport_cost(model, setting, cfg.process, schedule, n,
                                rng_mod.stream(seed, "eval"))
        path = os.path.join(args.out, "transport.csv")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("timestep,sigma,ic_cost,gc_cost\n")
            for t, sig, ic_c, gc_c in zip(report.timesteps, report.sigmas,
                                          report.ic_mean, report.gc_mean):
                fh.write(f"{t},{_fmt(sig)},{_fmt(ic_c)},{_fmt(gc_c)}\n")
        grid, ic_paths, gc_paths = trajectory_paths(
            model, setting, cfg.process, schedule, args.trajectories,
            rng_mod.stream(seed, "eval"))
        tpath = os.path.join(args.out, "trajectories.csv")
        with open(tpath, "w", encoding="utf-8") as fh:
            fh.write("arm,sample,timestep,sigma,x0,x1\n")
            for arm, paths in (("ic", ic_paths), ("gc", gc_paths)):
                for j in range(paths.shape[1]):
                    for t in range(paths.shape[0]):
                        p = paths[t, j]
                        fh.write(f"{arm},{j},{t},{_fmt(grid[t])},"
                                 f"{_fmt(p[0])},{_fmt(p[1])}\n")
        return 0

    # pfode
    if cfg.process != EDM:
        raise ConfigError("the pfode diagnostic requires the EDM process")
    if args.analytic_score:
        score_source = setting.data_dist
    elif args.score_checkpoint:
        sc = ckpt.load_checkpoint(args.score_checkpoint)
        score_source = ckpt.rebuild_score(sc, use_ema=True)
    else:
        raise ConfigError("pfode needs --analytic-score or --score-checkpoint")
    n = args.n if args.n is not None else 4096
    rows = []
    for c in checkpoints:
        # as with transport, the consistency model only supplies GC endpoints
        model = ckpt.rebuild_consistency(c, use_ema=cfg.use_ema_for_gc)
        report = pfode_distance(model, score_source, setting, cfg.process,
                                schedule, tdist, n, rng_mod.stream(seed, "eval"),
                                step=c.meta.get("step", 0))
        rows.append((report.step, report.ic_distance, report.gc_distance))
    path = os.path.join(args.out, "pfode.csv")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("step,ic_distance,gc_distance\n")
        for step, ic_d, gc_d in rows:
            fh.write(f"{step},{_fmt(ic_d)},{_fmt(gc_d)}\n")
    return 0


# --------------------------------------------------------- sample / eval


def cmd_sample(args):
    if args.n < 0:
        raise ConfigError(f"sample count must be >= 0, got {args.n}")
    if args.n == 0:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("x0,x1\n")
        return 0
    c = ckpt.load_checkpoint(args.checkpoint)
    model = ckpt.rebuild_consistency(c, use_ema=True)
    meta = c.meta
    try:
        noise = GaussianMixture.isotropic(
            np.asarray(ckpt.parse_means(meta["noise_means"])), meta["noise_std"])
        process = meta["process"]
    except KeyError as exc:
        raise StructuralError(f"checkpoint lacks sampling metadata ({exc})") from None
    rng = rng_mod.stream(args.seed, "eval")
    z = noise.sample(args.n, rng)
    samples = one_step_generate(model, process, z)
    dump_samples_csv(args.out, samples)
    return 0


def cmd_eval(args):
    cfg = load_config(args.config)
    c = ckpt.load_checkpoint(args.checkpoint)
    if c.kind != "consistency":
        raise StructuralError(f"eval needs a consistency checkpoint, got {c.kind}")
    _check_architecture(c, cfg)
    model = ckpt.rebuild_consistency(c, use_ema=True)
    setting = cfg.build_setting()
    rng = _eval_rng(args, cfg)
    n = args.n if args.n is not None else 4096
    z = setting.noise_dist.sample(n, rng)
    generated = one_step_generate(model, cfg.process, z)
    held_out = setting.data_dist.sample(n, rng)
    ed = energy_distance(generated, held_out)
    balance = mode_balance(generated, setting.data_dist)
    with open(args.out, "w", encoding="utf-8") as fh:
        cols = ",".join(f"mode_balance_{i}" for i in range(len(balance)))
        fh.write(f"n,energy_distance,{cols}\n")
        vals = ",".join(_fmt(b) for b in balance)
        fh.write(f"{n},{_fmt(ed)},{vals}\n")
    return 0


# ----------------------------------------------------------------- main


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ctlab",
        description="Consistency-model training laboratory on 2D mixtures.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run a training from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None,
                   help="override the config seed")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("diagnose", help="compute a diagnostic report CSV")
    p.add_argument("kind", choices=("variance", "transport", "pfode"))
    p.add_argument("--checkpoint", action="append", required=True,
                   help="repeatable for step-series diagnostics")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--trajectories", type=int, default=64)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--analytic-score", action="store_true")
    group.add_argument("--score-checkpoint", default=None)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("sample", help="one-step generation from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("eval", help="energy distance and mode balance summary")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None):
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CtlabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
