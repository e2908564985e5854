#!/usr/bin/env python3
"""Benchmark the numba kernels against their pure-numpy twins.

Times the hot inner kernels (convolution forward/backward and the
normalization channel mix) at a few representative sizes and prints a
speedup table.  Run after warming the numba cache:

    python3 scripts/bench_kernels.py [--repeats 30]
"""

import argparse
import time

import numpy as np

from scae import _kernels_numpy as knp

try:
    from scae import _kernels_numba as knb
except ImportError:
    knb = None


def best_ms(fn, repeats):
    fn()  # warm up (and compile, for numba)
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append((time.perf_counter() - t0) * 1e3)
    return min(times)


def cases(rng):
    # (label, x, kernel, stride, g) covering desk and full-scale shapes
    specs = [
        ("conv 8x3->16 k5 s4 24px", (8, 3, 24, 24), (16, 3, 5, 5), 4),
        ("conv 8x16->16 k3 s2 6px", (8, 16, 6, 6), (16, 16, 3, 3), 2),
        ("conv 1x192->192 k5 s2 96px", (1, 192, 96, 96), (192, 192, 5, 5), 2),
    ]
    for label, xs, ks, s in specs:
        x = rng.normal(size=xs)
        k = rng.normal(size=ks)
        oh = (xs[2] - ks[2]) // s + 1
        g = rng.normal(size=(xs[0], ks[0], oh, oh))
        yield label, x, k, s, g


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeats", type=int, default=20)
    args = ap.parse_args()
    if knb is None:
        raise SystemExit("numba backend not importable; nothing to compare")

    rng = np.random.default_rng(0)
    rows = []
    for label, x, k, s, g in cases(rng):
        kh = k.shape[2]
        h = x.shape[2]
        for name, np_fn, nb_fn in (
            ("fwd", lambda m=knp: m.conv_fwd(x, k, s),
             lambda m=knb: m.conv_fwd(x, k, s)),
            ("input-grad", lambda m=knp: m.conv_scatter(g, k, s, h, h),
             lambda m=knb: m.conv_scatter(g, k, s, h, h)),
            ("kernel-grad", lambda m=knp: m.conv_kernel_grad(x, g, s, kh, kh),
             lambda m=knb: m.conv_kernel_grad(x, g, s, kh, kh)),
        ):
            a = best_ms(np_fn, args.repeats)
            b = best_ms(nb_fn, args.repeats)
            rows.append((f"{label} {name}", a, b))

    w = rng.normal(size=(192, 192))
    y2 = rng.normal(size=(1, 192, 48, 48))
    beta = rng.normal(size=192)
    rows.append((
        "chan_affine 192ch 48px",
        best_ms(lambda: knp.chan_affine(w, y2, beta), args.repeats),
        best_ms(lambda: knb.chan_affine(w, y2, beta), args.repeats),
    ))

    print(f"{'kernel':<42} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8}")
    for label, a, b in rows:
        print(f"{label:<42} {a:>10.3f} {b:>10.3f} {a / b:>8.2f}x")


if __name__ == "__main__":
    main()
