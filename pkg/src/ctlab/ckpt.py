"""Binary checkpoint format.

Layout, all integers little-endian:

    magic           4 bytes  b"CGCM"
    version         u32      currently 1
    kind            u8       1 = consistency, 2 = score
    metadata_len    u32
    metadata        UTF-8 text, "key = value" per line
    param_count     u64
    live params     param_count little-endian float64
    ema params      param_count little-endian float64

Round-trips are bit-exact; the loader rejects unknown magic or version.
"""

import os
import struct

import numpy as np

from dataclasses import dataclass

from .errors import StructuralError
from .model import ConsistencyModel
from .nn import NetworkSpec
from .schedule import build_schedule
from .score import ScoreModel

MAGIC = b"CGCM"
VERSION = 1
_KIND_CODES = {"consistency": 1, "score": 2}
_KIND_NAMES = {v: k for k, v in _KIND_CODES.items()}


@dataclass
class Checkpoint:
    kind: str
    meta: dict
    params: np.ndarray
    ema_params: np.ndarray


def _encode_meta(meta):
    lines = []
    for key, value in meta.items():
        if isinstance(value, float):
            value = repr(value)
        lines.append(f"{key} = {value}")
    return ("\n".join(lines) + "\n").encode("utf-8")


def _decode_meta(blob):
    meta = {}
    for line in blob.decode("utf-8").splitlines():
        line = line.strip()
        if not line:
            continue
        key, sep, value = line.partition(" = ")
        if not sep:
            raise StructuralError(f"malformed checkpoint metadata line {line!r}")
        for conv in (int, float):
            try:
                meta[key] = conv(value)
                break
            except ValueError:
                continue
        else:
            meta[key] = value
    return meta


def save_checkpoint(path, kind, meta, params, ema_params):
    if kind not in _KIND_CODES:
        raise StructuralError(f"unknown checkpoint kind {kind!r}")
    params = np.ascontiguousarray(params, dtype="<f8")
    ema_params = np.ascontiguousarray(ema_params, dtype="<f8")
    if params.shape != ema_params.shape or params.ndim != 1:
        raise StructuralError("live and EMA parameter vectors must be flat and equal-length")
    blob = _encode_meta(meta)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<B", _KIND_CODES[kind]))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<Q", params.size))
        fh.write(params.tobytes())
        fh.write(ema_params.tobytes())
    os.replace(tmp, path)


def load_checkpoint(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != MAGIC:
        raise StructuralError(f"{path}: not a checkpoint (bad magic)")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != VERSION:
        raise StructuralError(f"{path}: unsupported checkpoint version {version}")
    (kind_code,) = struct.unpack_from("<B", raw, 8)
    kind = _KIND_NAMES.get(kind_code)
    if kind is None:
        raise StructuralError(f"{path}: unknown model kind tag {kind_code}")
    (meta_len,) = struct.unpack_from("<I", raw, 9)
    off = 13
    meta = _decode_meta(raw[off:off + meta_len])
    off += meta_len
    (count,) = struct.unpack_from("<Q", raw, off)
    off += 8
    need = off + 2 * 8 * count
    if len(raw) < need:
        raise StructuralError(f"{path}: truncated checkpoint")
    params = np.frombuffer(raw, dtype="<f8", count=count, offset=off).copy()
    ema = np.frombuffer(raw, dtype="<f8", count=count, offset=off + 8 * count).copy()
    return Checkpoint(kind, meta, params, ema)


def _format_means(means):
    return ";".join(",".join(repr(float(v)) for v in point) for point in means)


def parse_means(text):
    return tuple(tuple(float(v) for v in p.split(",")) for p in text.split(";"))


def metadata_for(spec, schedule, sigma_data, step, process, setting=None,
                 extra=None):
    """Everything needed to rebuild and drive a model from the file alone."""
    meta = {
        "input_dim": spec.input_dim,
        "hidden_dim": spec.hidden_dim,
        "depth": spec.depth,
        "output_dim": spec.output_dim,
        "sigma_data": float(sigma_data),
        "sigma_min": float(schedule.sigma_min),
        "sigma_max": float(schedule.sigma_max),
        "rho": float(schedule.rho),
        "n_intervals": schedule.n_intervals,
        "step": int(step),
        "process": process,
    }
    if setting is not None:
        meta["setting"] = setting.name
        meta["noise_means"] = _format_means(setting.noise_dist.means)
        meta["noise_std"] = float(np.sqrt(setting.noise_dist.covs[0, 0, 0]))
    if extra:
        meta.update(extra)
    return meta


def _spec_and_schedule(ckpt):
    m = ckpt.meta
    try:
        spec = NetworkSpec(m["input_dim"], m["hidden_dim"], m["depth"],
                           m["output_dim"])
        schedule = build_schedule(m["sigma_min"], m["sigma_max"], m["rho"],
                                  m["n_intervals"])
        sigma_data = m["sigma_data"]
    except KeyError as exc:
        raise StructuralError(f"checkpoint metadata missing {exc}") from None
    if ckpt.params.shape != (spec.param_count,):
        raise StructuralError("checkpoint parameter count does not match its spec")
    return spec, schedule, sigma_data


def rebuild_consistency(ckpt, use_ema=True):
    if ckpt.kind != "consistency":
        raise StructuralError(f"expected a consistency checkpoint, got {ckpt.kind!r}")
    spec, schedule, sigma_data = _spec_and_schedule(ckpt)
    params = ckpt.ema_params if use_ema else ckpt.params
    return ConsistencyModel(spec, params, sigma_data, schedule)


def rebuild_score(ckpt, use_ema=False):
    if ckpt.kind != "score":
        raise StructuralError(f"expected a score checkpoint, got {ckpt.kind!r}")
    spec, schedule, sigma_data = _spec_and_schedule(ckpt)
    params = ckpt.ema_params if use_ema else ckpt.params
    return ScoreModel(spec, params, sigma_data, schedule)
