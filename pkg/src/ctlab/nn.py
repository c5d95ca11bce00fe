"""Dense network with hand-written forward and reverse passes.

The network maps a point x and a noise level sigma to an output of the same
dimensionality as x. Conditioning is fixed: ln(sigma) is appended to x as one
extra input feature. Hidden layers use exact GELU; the output layer is
linear.

Parameters live in a single flat float64 vector. Layout, layer by layer from
input to output: the weight matrix in row-major order (shape in_features x
out_features), then the bias (out_features,). This layout is a contract
shared by the optimizers, checkpoints, and the finite-difference tests.
"""

from dataclasses import dataclass, field

import numpy as np

from . import backend
from .errors import NumericError, StructuralError

_SUPPORTED_CONDITIONING = "append_log_sigma"


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture description; immutable and hashable."""

    input_dim: int
    hidden_dim: int
    depth: int  # number of hidden (GELU) layers
    output_dim: int
    conditioning: str = _SUPPORTED_CONDITIONING

    def __post_init__(self):
        for name in ("input_dim", "hidden_dim", "depth", "output_dim"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise StructuralError(f"NetworkSpec.{name} must be a positive integer, got {v!r}")
        if self.conditioning != _SUPPORTED_CONDITIONING:
            raise StructuralError(f"unsupported conditioning {self.conditioning!r}")

    @property
    def feature_dim(self):
        return self.input_dim + 1

    @property
    def layer_dims(self):
        """(in_features, out_features) per layer, input to output."""
        dims = [self.feature_dim] + [self.hidden_dim] * self.depth + [self.output_dim]
        return [(dims[i], dims[i + 1]) for i in range(len(dims) - 1)]

    @property
    def param_count(self):
        return sum(fi * fo + fo for fi, fo in self.layer_dims)


def param_views(spec, params):
    """Zero-copy (W, b) views into the flat vector, one pair per layer."""
    if params.shape != (spec.param_count,):
        raise StructuralError(
            f"parameter vector has shape {params.shape}, expected ({spec.param_count},)")
    views = []
    off = 0
    for fi, fo in spec.layer_dims:
        w = params[off:off + fi * fo].reshape(fi, fo)
        off += fi * fo
        b = params[off:off + fo]
        off += fo
        views.append((w, b))
    return views


def init_params(spec, rng):
    """He-style uniform init for hidden layers, zeros for the output layer.

    Zero-initializing the final layer makes the network output identically
    zero at step 0, which keeps early consistency targets close to the skip
    branch.
    """
    params = np.zeros(spec.param_count)
    layers = param_views(spec, params)
    for w, _b in layers[:-1]:
        bound = np.sqrt(6.0 / w.shape[0])
        w[:] = rng.uniform(-bound, bound, size=w.shape)
    return params


@dataclass
class Tape:
    """Intermediates recorded by one forward pass.

    acts[l] is the input to layer l (acts[0] is the feature matrix), pres[l]
    the pre-activation of hidden layer l. A tape feeds exactly one backward
    pass; reuse raises.
    """

    spec: NetworkSpec
    acts: list
    pres: list
    consumed: bool = field(default=False)

    def rows(self, sl):
        """Tape restricted to a row slice of the batch (views, no copies)."""
        return Tape(self.spec, [a[sl] for a in self.acts], [p[sl] for p in self.pres])


def _features(spec, x, sigma):
    x = np.asarray(x, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != spec.input_dim:
        raise StructuralError(f"x has shape {x.shape}, expected (n, {spec.input_dim})")
    n = x.shape[0]
    if n < 1:
        raise StructuralError("empty batch")
    if sigma.shape != (n,):
        raise StructuralError(f"sigma has shape {sigma.shape}, expected ({n},)")
    if not np.all(np.isfinite(x)):
        raise NumericError("non-finite values in network input x")
    if not (np.all(np.isfinite(sigma)) and np.all(sigma > 0.0)):
        raise NumericError("sigma must be finite and positive")
    feats = np.empty((n, spec.feature_dim))
    feats[:, :spec.input_dim] = x
    feats[:, spec.input_dim] = np.log(sigma)
    return feats


def forward(spec, params, x, sigma, want_tape=False):
    """Evaluate the network.

    Returns (y, tape); tape is None unless want_tape. y has shape
    (n, output_dim).
    """
    layers = param_views(spec, params)
    h = _features(spec, x, sigma)
    acts = [h]
    pres = []
    for w, b in layers[:-1]:
        pre = h @ w + b
        h = backend.gelu(pre)
        pres.append(pre)
        acts.append(h)
    w_out, b_out = layers[-1]
    y = h @ w_out + b_out
    if want_tape:
        return y, Tape(spec, acts, pres)
    return y, None


def backward(spec, params, tape, cotangent, want_input_grad=False,
             want_per_sample_sqnorm=False):
    """Reverse pass for the batch recorded on `tape`.

    cotangent is dL/dy, shape (n, output_dim). Returns a dict with:
      grads: flat parameter gradient, same layout as `params`
      input_grad: dL/dx (n, input_dim), only if requested
      per_sample_sqnorm: (n,) squared norms of per-row parameter gradients
        for the given cotangent rows, only if requested

    The per-row squared norm uses the rank-one structure of dense-layer
    gradients: row j contributes (||a_j||^2 + 1) ||d_j||^2 per layer, with
    a_j the layer input and d_j the backpropagated delta.
    """
    if tape.consumed:
        raise StructuralError("tape already consumed by a previous backward pass")
    if tape.spec is not spec and tape.spec != spec:
        raise StructuralError("tape was recorded under a different NetworkSpec")
    tape.consumed = True

    layers = param_views(spec, params)
    n = tape.acts[0].shape[0]
    d = np.asarray(cotangent, dtype=np.float64)
    if d.shape != (n, spec.output_dim):
        raise StructuralError(f"cotangent has shape {d.shape}, expected ({n}, {spec.output_dim})")

    grads = np.empty(spec.param_count)
    gviews = param_views(spec, grads)
    sq = np.zeros(n) if want_per_sample_sqnorm else None

    for l in range(len(layers) - 1, -1, -1):
        a_in = tape.acts[l]
        gw, gb = gviews[l]
        np.matmul(a_in.T, d, out=gw)
        np.sum(d, axis=0, out=gb)
        if sq is not None:
            backend.row_grad_sqnorm(a_in, d, sq)
        if l > 0:
            d = backend.gelu_vjp(tape.pres[l - 1], d @ layers[l][0].T)
        elif want_input_grad:
            d = d @ layers[0][0].T

    out = {"grads": grads}
    if want_input_grad:
        out["input_grad"] = d[:, :spec.input_dim]
    if want_per_sample_sqnorm:
        out["per_sample_sqnorm"] = sq
    return out
