"""Benchmark the compiled convolution kernels against the numpy fallback.

Runs forward, grad-input, and grad-weight on the model's real kernel shapes
and prints a per-op timing table plus the speedup.  Correctness is checked
first: both backends must agree to near machine precision.

Usage: python benchmarks/bench_conv.py [--batch 200] [--repeat 5]
"""

import argparse
import importlib
import os
import sys
import time

import numpy as np


def load_backend(name):
    """Reimport csilab.convolution with the backend forced via env var."""
    os.environ["CSILAB_CONV_BACKEND"] = name
    for mod in list(sys.modules):
        if mod.startswith("csilab"):
            del sys.modules[mod]
    conv = importlib.import_module("csilab.convolution")
    if conv.BACKEND != name:
        raise SystemExit(f"backend {name!r} unavailable (got {conv.BACKEND})")
    return conv


# (label, B, C, O, H, W, kh, kw) taken from the default model at batch 200.
CASES = [
    ("enc 8x1", 200, 2, 8, 16, 13, 8, 1),
    ("enc 1x8", 200, 8, 8, 16, 13, 1, 8),
    ("dense 3x3 c16", 200, 16, 8, 16, 13, 3, 3),
    ("dense 3x3 c32", 200, 32, 8, 16, 13, 3, 3),
    ("dec head 3x3", 200, 40, 4, 16, 13, 3, 3),
]


def time_op(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench(conv, case, repeat, dtype):
    label, B, C, O, H, W, kh, kw = case
    rng = np.random.default_rng(0)
    x = rng.standard_normal((B, C, H, W)).astype(dtype)
    w = rng.standard_normal((O, C, kh, kw)).astype(dtype)
    bias = rng.standard_normal(O).astype(dtype)
    gout = rng.standard_normal((B, O, H, W)).astype(dtype)
    out = {}
    out["forward"] = time_op(lambda: conv.conv2d_forward(x, w, bias), repeat)
    out["grad_in"] = time_op(lambda: conv.conv2d_grad_input(gout, w), repeat)
    out["grad_w"] = time_op(lambda: conv.conv2d_grad_weight(x, gout, kh, kw), repeat)
    return out


def check_agreement(ext, ref, dtype):
    rng = np.random.default_rng(1)
    x = rng.standard_normal((4, 3, 9, 8)).astype(dtype)
    w = rng.standard_normal((5, 3, 3, 3)).astype(dtype)
    bias = rng.standard_normal(5).astype(dtype)
    gout = rng.standard_normal((4, 5, 9, 8)).astype(dtype)
    tol = 1e-4 if dtype == np.float32 else 1e-10
    pairs = [
        (ext.conv2d_forward(x, w, bias), ref.conv2d_forward(x, w, bias)),
        (ext.conv2d_grad_input(gout, w), ref.conv2d_grad_input(gout, w)),
        (ext.conv2d_grad_weight(x, gout, 3, 3), ref.conv2d_grad_weight(x, gout, 3, 3)),
    ]
    for a, b in pairs:
        err = np.abs(a - b).max()
        if err > tol:
            raise SystemExit(f"backend disagreement: {err}")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--dtype", choices=["float32", "float64"], default="float32")
    args = ap.parse_args()
    dtype = np.dtype(args.dtype).type

    ext = load_backend("ext")
    ref = load_backend("numpy")
    check_agreement(ext, ref, dtype)
    print(f"backends agree ({args.dtype}); timing best of {args.repeat}\n")

    header = f"{'case':<16} {'op':<8} {'ext (ms)':>10} {'numpy (ms)':>11} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    totals = {"ext": 0.0, "numpy": 0.0}
    for case in CASES:
        te = bench(ext, case, args.repeat, dtype)
        tn = bench(ref, case, args.repeat, dtype)
        for op in ("forward", "grad_in", "grad_w"):
            totals["ext"] += te[op]
            totals["numpy"] += tn[op]
            print(
                f"{case[0]:<16} {op:<8} {te[op] * 1e3:>10.2f} "
                f"{tn[op] * 1e3:>11.2f} {tn[op] / te[op]:>7.2f}x"
            )
    print("-" * len(header))
    print(
        f"{'total':<16} {'':<8} {totals['ext'] * 1e3:>10.2f} "
        f"{totals['numpy'] * 1e3:>11.2f} "
        f"{totals['numpy'] / totals['ext']:>7.2f}x"
    )


if __name__ == "__main__":
    main()
