"""Timing comparison of the compiled kernels against the numpy fallback.

Usage:

    python3 benchmarks/bench_backends.py [--repeats 5] [--steps 30]

Reports per-kernel microbenchmarks and an end-to-end training-step timing
for every available backend. Sizes mirror the full-scale runs (batch 512,
hidden 256, depth 4) so the numbers predict real training throughput.
"""

import argparse
import time

import numpy as np

from ctlab import backend
from ctlab.train import TrainConfig, Trainer


def _time(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def kernel_benchmarks(repeats):
    rng = np.random.default_rng(0)
    act = rng.standard_normal((512, 256))
    gout = rng.standard_normal((512, 256))
    nparams = 256 * 256 * 4
    params = rng.standard_normal(nparams)
    grads = rng.standard_normal(nparams)
    m = np.zeros(nparams)
    v = np.zeros(nparams)
    ema = params.copy()
    act_in = rng.standard_normal((512, 257))
    delta = rng.standard_normal((512, 256))
    out = np.zeros(512)
    cost = rng.standard_normal((512, 512))

    return {
        "gelu (512x256)": lambda: backend.gelu(act),
        "gelu_vjp (512x256)": lambda: backend.gelu_vjp(act, gout),
        "adam_update (262k)": lambda: backend.adam_update(
            params, grads, m, v, 1, 1e-4, 0.9, 0.999, 1e-8),
        "lion_update (262k)": lambda: backend.lion_update(
            params, grads, m, 1e-4, 0.9, 0.99),
        "ema_update (262k)": lambda: backend.ema_update(ema, params, 0.999),
        "row_grad_sqnorm (512)": lambda: backend.row_grad_sqnorm(
            act_in, delta, out),
        "hungarian (512x512)": lambda: backend.hungarian(cost),
    }


def training_step_benchmark(steps):
    cfg = TrainConfig(setting="2m-2m", process="bridge", mu=0.5,
                      coupling="mix", n_samples=2000, batch_size=512,
                      hidden_dim=256, depth=4, total_steps=steps,
                      curriculum="fixed", n_steps_fixed=30, seed=0,
                      metric_interval=10 ** 9, checkpoint_interval=10 ** 9)
    trainer = Trainer(cfg)
    trainer.step()  # warm caches before timing
    t0 = time.perf_counter()
    for _ in range(steps - 1):
        trainer.step()
    return (time.perf_counter() - t0) / (steps - 1)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--steps", type=int, default=30,
                        help="training steps for the end-to-end timing")
    args = parser.parse_args()

    backends = backend.available_backends()
    print(f"backends: {', '.join(backends)}\n")

    rows = []
    for name in backends:
        backend.use(name)
        for label, fn in kernel_benchmarks(args.repeats).items():
            rows.append((label, name, _time(fn, args.repeats)))

    width = max(len(label) for label, _, _ in rows)
    print(f"{'kernel':<{width}}  {'backend':<9} {'best (ms)':>10}")
    baselines = {}
    for label, name, sec in rows:
        speedup = ""
        if name == backends[0]:
            baselines[label] = sec
        elif label in baselines:
            speedup = f"  x{sec / baselines[label]:.2f} vs {backends[0]}"
        print(f"{label:<{width}}  {name:<9} {sec * 1e3:>10.3f}{speedup}")

    print(f"\ntraining step (batch 512, hidden 256, depth 4, {args.steps} steps)")
    for name in backends:
        backend.use(name)
        sec = training_step_benchmark(args.steps)
        print(f"  {name:<9} {sec * 1e3:.1f} ms/step")


if __name__ == "__main__":
    main()
