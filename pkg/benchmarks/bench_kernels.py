#!/usr/bin/env python3
"""Compiled kernels vs pure-numpy fallback on a 512 x 512 workload.

Usage: python benchmarks/bench_kernels.py [--size 512] [--ao-k 16]
Prints one row per kernel with both timings and the max result deviation.
"""

import argparse
import time

import numpy as np

import mock3d._kernels_py as kpy
from mock3d._rays import directional_fan, point_fan
from mock3d.render import ao_sample_distances

try:
    import mock3d._kernels as kc
except ImportError:
    kc = None


def timeit(fn, repeat=3):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--size", type=int, default=512)
    ap.add_argument("--ao-k", type=int, default=16)
    ap.add_argument("--ao-radius", type=int, default=32)
    args = ap.parse_args()
    n = args.size

    rng = np.random.default_rng(0)
    ys, xs = np.mgrid[0:n, 0:n].astype(np.float64)
    c = (n - 1) / 2.0
    bump = 20.0 * np.exp(-((xs - c) ** 2 + (ys - c) ** 2) / (2 * (n / 6.0) ** 2))
    prem0 = np.ascontiguousarray(np.gradient(bump, axis=1))
    prem1 = np.ascontiguousarray(np.gradient(bump, axis=0))
    z = np.ascontiguousarray(np.where(xs > c, 3.0, 0.0))
    heights = np.ascontiguousarray(bump + rng.uniform(0, 0.5, (n, n)))

    grid = point_fan(n, n, (c, c))
    dgrid = directional_fan(n, n, 0.6)
    lgrid = point_fan(n, n, (-20.0, c), from_center=True)
    d = lgrid.t0[lgrid.pix_ray] + lgrid.pix_len
    with np.errstate(divide="ignore"):
        thr = np.where(d > 0, (heights.ravel() - 40.0) / d, np.inf)
    thr = np.ascontiguousarray(thr)

    cases = {
        "sweep/point": lambda mod: mod.sweep_integrate(
            prem0, prem1, z, True, 1, grid.dirs, grid.origins, grid.order,
            grid.ray_start, grid.pix_len, grid.step),
        "sweep/directional": lambda mod: mod.sweep_integrate(
            prem0, prem1, z, True, 1, dgrid.dirs, dgrid.origins, dgrid.order,
            dgrid.ray_start, dgrid.pix_len, dgrid.step),
        "shadow/point": lambda mod: mod.horizon_sweep(
            heights, lgrid.dirs, lgrid.origins, lgrid.t0, lgrid.order,
            lgrid.ray_start, lgrid.pix_len, thr, 1.0, 0, 40.0, 0.0),
        f"ao/k={args.ao_k}": lambda mod: mod.ao_scan(
            heights, heights, args.ao_k, ao_sample_distances(args.ao_radius)),
    }

    print(f"{args.size}x{args.size} canvas, backends: "
          f"{'compiled+python' if kc else 'python only (extension not built)'}")
    print(f"{'kernel':<20} {'compiled':>10} {'python':>10} {'speedup':>8} {'max|diff|':>10}")
    for name, fn in cases.items():
        t_py, out_py = timeit(lambda: fn(kpy))
        if kc is None:
            print(f"{name:<20} {'-':>10} {t_py:>9.3f}s {'-':>8} {'-':>10}")
            continue
        t_c, out_c = timeit(lambda: fn(kc))
        a = np.concatenate([np.ravel(o) for o in (out_c if isinstance(out_c, tuple) else (out_c,))])
        b = np.concatenate([np.ravel(o) for o in (out_py if isinstance(out_py, tuple) else (out_py,))])
        diff = np.abs(a.astype(np.float64) - b.astype(np.float64)).max()
        print(f"{name:<20} {t_c:>9.3f}s {t_py:>9.3f}s {t_py / t_c:>7.1f}x {diff:>10.2e}")


if __name__ == "__main__":
    main()
