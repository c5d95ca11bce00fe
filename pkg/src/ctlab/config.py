"""INI-style run configuration.

Sections and keys mirror the hyperparameter tables the runs are transcribed
from; every key is optional and falls back to the TrainConfig default:

    [experiment] setting, process, n_samples, data_std, noise_std,
                 data_means, noise_means
    [schedule]   sigma_min, sigma_max, rho, curriculum, n_steps, s0, s1,
                 timestep_distribution, p_mean, p_std
    [model]      hidden_dim, depth, distance, sigma_data
    [optimizer]  kind, lr, ema_decay, max_grad_norm
    [coupling]   mu, use_ema_for_gc, per_sample_mix, mode
    [run]        seed, batch_size, total_steps, metric_interval,
                 checkpoint_interval, model_kind

Mean lists are written as `x,y;x,y` (no spaces around the semicolon, which
would otherwise start an inline comment).
"""

import configparser

from .errors import ConfigError
from .train import TrainConfig


def _parse_bool(text):
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_means(text):
    points = []
    for part in text.split(";"):
        coords = tuple(float(v) for v in part.split(","))
        if len(coords) != 2:
            raise ValueError(f"expected 2 coordinates per point, got {part!r}")
        points.append(coords)
    return tuple(points)


# section -> key -> (TrainConfig field, converter)
_SCHEMA = {
    "experiment": {
        "setting": ("setting", str),
        "process": ("process", str),
        "n_samples": ("n_samples", int),
        "data_std": ("data_std", float),
        "noise_std": ("noise_std", float),
        "data_means": ("data_means", _parse_means),
        "noise_means": ("noise_means", _parse_means),
    },
    "schedule": {
        "sigma_min": ("sigma_min", float),
        "sigma_max": ("sigma_max", float),
        "rho": ("rho", float),
        "curriculum": ("curriculum", str),
        "n_steps": ("n_steps_fixed", int),
        "s0": ("s0", int),
        "s1": ("s1", int),
        "timestep_distribution": ("timestep_distribution", str),
        "p_mean": ("p_mean", float),
        "p_std": ("p_std", float),
    },
    "model": {
        "hidden_dim": ("hidden_dim", int),
        "depth": ("depth", int),
        "distance": ("distance", str),
        "sigma_data": ("sigma_data", float),
    },
    "optimizer": {
        "kind": ("optimizer", str),
        "lr": ("lr", float),
        "ema_decay": ("ema_decay", float),
        "max_grad_norm": ("max_grad_norm", float),
    },
    "coupling": {
        "mu": ("mu", float),
        "use_ema_for_gc": ("use_ema_for_gc", _parse_bool),
        "per_sample_mix": ("per_sample_mix", _parse_bool),
        "mode": ("coupling", str),
    },
    "run": {
        "seed": ("seed", int),
        "batch_size": ("batch_size", int),
        "total_steps": ("total_steps", int),
        "metric_interval": ("metric_interval", int),
        "checkpoint_interval": ("checkpoint_interval", int),
        "model_kind": ("model_kind", str),
    },
}


def parse_config_text(text, source="<config>"):
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    fields = {}
    for section in parser.sections():
        schema = _SCHEMA.get(section)
        if schema is None:
            raise ConfigError(f"{source}: unknown section [{section}]")
        for key, value in parser.items(section):
            entry = schema.get(key)
            if entry is None:
                raise ConfigError(f"{source}: unknown key {key!r} in [{section}]")
            field, conv = entry
            try:
                fields[field] = conv(value)
            except ValueError as exc:
                raise ConfigError(
                    f"{source}: bad value for [{section}] {key}: {exc}") from None
    return TrainConfig(**fields)


def load_config(path):
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    return parse_config_text(text, source=str(path))
