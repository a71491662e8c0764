#!/usr/bin/env python3
"""Compare the compiled kernels against the numpy fallback.

Run:  python benchmarks/bench_kernels.py [--repeats 200]
"""

import argparse
import time

import numpy as np

from shiftgen import _kernels_np, kernels


def _time(fn, repeats):
    fn()  # warm up
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeats", type=int, default=200)
    ap.add_argument("--rows", type=int, default=4096)
    ap.add_argument("--cols", type=int, default=64)
    args = ap.parse_args()

    if not kernels.HAVE_EXT:
        print("compiled extension not available; nothing to compare")
        return

    from shiftgen import _ckernels

    rng = np.random.default_rng(0)
    x = rng.standard_normal((args.rows, args.cols)).astype(np.float32)
    gain = np.ones(args.cols, dtype=np.float32)
    bias = np.zeros(args.cols, dtype=np.float32)
    p = _kernels_np.softmax2d(x)
    g = rng.standard_normal(x.shape).astype(np.float32)
    _, xhat, rstd = _kernels_np.layer_norm2d(x, gain, bias, 1e-5)
    codes = rng.integers(0, 4, 50_000)
    mask = (codes > 0).astype(np.int64)

    cases = {
        "softmax2d": (lambda: _ckernels.softmax2d(x),
                      lambda: _kernels_np.softmax2d(x)),
        "softmax2d_grad": (lambda: _ckernels.softmax2d_grad(p, g),
                           lambda: _kernels_np.softmax2d_grad(p, g)),
        "layer_norm2d": (lambda: _ckernels.layer_norm2d(x, gain, bias, 1e-5),
                         lambda: _kernels_np.layer_norm2d(x, gain, bias, 1e-5)),
        "layer_norm2d_grad": (
            lambda: _ckernels.layer_norm2d_grad(xhat, rstd, gain, g),
            lambda: _kernels_np.layer_norm2d_grad(xhat, rstd, gain, g)),
        "find_runs": (lambda: _ckernels.find_runs(codes, mask),
                      lambda: _kernels_np.find_runs(codes, mask)),
    }

    print(f"{'kernel':<20} {'cython':>12} {'numpy':>12} {'speedup':>9}")
    for name, (c_fn, n_fn) in cases.items():
        tc = _time(c_fn, args.repeats)
        tn = _time(n_fn, args.repeats)
        print(f"{name:<20} {tc * 1e6:>10.1f}us {tn * 1e6:>10.1f}us {tn / tc:>8.2f}x")


if __name__ == "__main__":
    main()
