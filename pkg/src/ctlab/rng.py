"""Deterministic random number streams.

Every stochastic choice in a run draws from a named stream spawned from the
single run seed. Streams are spawned in a fixed order so that the mapping
seed -> (stream name -> generator) never changes between runs or platforms.
Adding a purpose means appending to STREAMS, never reordering.
"""

import numpy as np

# Spawn order is part of the on-disk reproducibility contract.
STREAMS = (
    "init",       # parameter initialization
    "data_pool",  # the fixed training pool drawn once per run
    "data",       # per-step minibatch rows
    "noise",      # per-step latent draws
    "timestep",   # per-step timestep indices
    "mixing",     # coupling policy coin flips
    "eval",       # evaluation / diagnostics draws
)


def make_streams(seed):
    """Return a dict mapping stream name -> independent np.random.Generator."""
    root = np.random.SeedSequence(seed)
    children = root.spawn(len(STREAMS))
    return {name: np.random.Generator(np.random.PCG64(child))
            for name, child in zip(STREAMS, children)}


def stream(seed, purpose):
    """One-off generator for a single named stream of `seed`."""
    if purpose not in STREAMS:
        raise ValueError(f"unknown rng stream {purpose!r}")
    return make_streams(seed)[purpose]
