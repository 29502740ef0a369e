#!/usr/bin/env python3
"""Benchmark the compiled kernel extension against the numpy fallback.

Times the four convolution shapes of the default classifier (batch 32)
plus one full training step, and prints a table.  Run after an editable
install:

    python3 benchmarks/bench_kernels.py [--reps 10]
"""

import argparse
import time

import numpy as np

from schoolsweep import _kernels
from schoolsweep.model import net
from schoolsweep.model.train import Adam

LAYER_SHAPES = [
    # (cin, cout, spatial) for the default channels (8, 16, 32) + final 32 at 64 px
    (3, 8, 64),
    (8, 16, 32),
    (16, 32, 16),
    (32, 32, 8),
]


def timeit(fn, reps):
    fn()  # warmup
    start = time.perf_counter()
    for _ in range(reps):
        fn()
    return (time.perf_counter() - start) / reps


def bench_layers(reps: int):
    rng = np.random.default_rng(0)
    backends = _kernels.available_backends()
    print(f"{'layer':<18}{'backend':<10}{'forward ms':>12}{'backward ms':>13}")
    totals = {name: 0.0 for name in backends}
    for cin, cout, s in LAYER_SHAPES:
        x = np.ascontiguousarray(rng.normal(size=(32, cin, s, s)))
        w = np.ascontiguousarray(rng.normal(size=(cout, cin, 3, 3)))
        b = np.ascontiguousarray(rng.normal(size=cout))
        for name, mod in sorted(backends.items()):
            fwd = timeit(lambda: mod.conv3x3_forward(x, w, b), reps)
            y = mod.conv3x3_forward(x, w, b)
            bwd = timeit(lambda: mod.conv3x3_backward(x, w, y), reps)
            totals[name] += fwd + bwd
            print(f"{cin:>3}->{cout:<3}@{s:<3}px   {name:<10}{fwd * 1e3:>12.2f}{bwd * 1e3:>13.2f}")
    print()
    for name, total in sorted(totals.items()):
        print(f"conv total per batch ({name}): {total * 1e3:.1f} ms")
    return totals


def bench_training_step(reps: int):
    rng = np.random.default_rng(1)
    x = rng.random((32, 3, 64, 64))
    y = (np.arange(32) % 2).astype(np.int64)
    print(f"\n{'training step (batch 32, 64 px)':<38}{'ms/step':>10}")
    for name in sorted(_kernels.available_backends()):
        mod = _kernels.available_backends()[name]
        saved = (
            _kernels.conv3x3_forward,
            _kernels.conv3x3_backward,
            _kernels.maxpool2_forward,
            _kernels.maxpool2_backward,
        )
        _kernels.conv3x3_forward = mod.conv3x3_forward
        _kernels.conv3x3_backward = mod.conv3x3_backward
        _kernels.maxpool2_forward = mod.maxpool2_forward
        _kernels.maxpool2_backward = mod.maxpool2_backward
        try:
            params = net.init_params(0)
            optimizer = Adam(params)

            def step():
                logits, cache = net.forward(x, params)
                _, dlogits = net.smoothed_ce_batch(logits, y, 0.1)
                optimizer.step(params, net.backward(cache, params, dlogits), 1e-3)

            ms = timeit(step, max(3, reps // 3)) * 1e3
            print(f"{name:<38}{ms:>10.1f}")
        finally:
            (
                _kernels.conv3x3_forward,
                _kernels.conv3x3_backward,
                _kernels.maxpool2_forward,
                _kernels.maxpool2_backward,
            ) = saved


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--reps", type=int, default=10)
    args = parser.parse_args()
    names = sorted(_kernels.available_backends())
    print(f"available backends: {', '.join(names)} (active: {_kernels.BACKEND})\n")
    bench_layers(args.reps)
    bench_training_step(args.reps)


if __name__ == "__main__":
    main()
