"""Micro-benchmark: compiled kernels against the numpy fallback.

Runs each kernel on sizes representative of real use (the largest row
matches a 56x56 grid of dim-100 patches against 3136 neurons) and prints
the per-call medians side by side. Results also double as a sanity check
that the two backends agree on the benchmark inputs.

Usage: python benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import statistics
import time

import numpy as np

from kng.kernels import backends
from kng.scoring import gaussian_kernel

CASES = {
    "nearest_two": [
        ("196x100 vs 256", (196, 100, 256)),
        ("3136x100 vs 3136", (3136, 100, 3136)),
    ],
    "quad_form": [
        ("1000x100", (1000, 100)),
        ("3136x100", (3136, 100)),
    ],
    "gaussian_blur_2d": [
        ("56x56 sigma 4", (56, 4.0)),
        ("224x224 sigma 4", (224, 4.0)),
    ],
    "bilinear_resize": [
        ("56x56 -> 224x224", (56, 224)),
        ("14x14 -> 224x224", (14, 224)),
    ],
}


def make_args(kernel, shape, rng):
    if kernel == "nearest_two":
        n, d, k = shape
        return rng.normal(size=(n, d)), rng.normal(size=(k, d))
    if kernel == "quad_form":
        n, d = shape
        a = rng.normal(size=(d, d))
        return rng.normal(size=(n, d)), a @ a.T / d + np.eye(d)
    if kernel == "gaussian_blur_2d":
        side, sigma = shape
        return rng.normal(size=(side, side)), gaussian_kernel(sigma)
    side, out = shape
    return rng.normal(size=(side, side)), out, out


def timed(fn, args, repeats):
    fn(*args)  # warm-up
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples)


def close(a, b):
    if isinstance(a, tuple):
        return all(close(x, y) for x, y in zip(a, b))
    return np.allclose(a, b, rtol=1e-10, atol=1e-10)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeats", type=int, default=20)
    opts = ap.parse_args()

    impls = backends()
    if "native" not in impls:
        print("compiled backend not available; nothing to compare")
        return
    rng = np.random.default_rng(0)

    header = f"{'kernel':<18} {'case':<20} {'numpy':>10} {'native':>10} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for kernel, cases in CASES.items():
        for label, shape in cases:
            args = make_args(kernel, shape, rng)
            out = {name: getattr(mod, kernel)(*args)
                   for name, mod in impls.items()}
            agree = close(out["numpy"], out["native"])
            t_np = timed(getattr(impls["numpy"], kernel), args, opts.repeats)
            t_nat = timed(getattr(impls["native"], kernel), args, opts.repeats)
            note = "" if agree else "  !! outputs disagree"
            print(f"{kernel:<18} {label:<20} {t_np * 1e3:>8.2f}ms "
                  f"{t_nat * 1e3:>8.2f}ms {t_np / t_nat:>7.2f}x{note}")


if __name__ == "__main__":
    main()
