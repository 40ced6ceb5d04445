"""Time the numba kernels against their numpy fallbacks on realistic inputs.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--end-to-end]

Each pair runs on identical inputs and must agree exactly before it is
timed. ``--end-to-end`` also runs a band-depth envelope test in two fresh
interpreters, one with ``SETDEPTH_DISABLE_NUMBA=1``.
"""
from __future__ import annotations

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from setdepth import kernels
from setdepth.experiments import TABLE1_GRID
from setdepth.raster import signed_distance_field
from setdepth.simulate import gen_disc_sample


def _best(fn, repeat):
    fn()  # warm-up, includes compilation
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def cases(seed=0):
    rng = np.random.default_rng(seed)
    sample = gen_disc_sample(100, 2.0, 4.0, TABLE1_GRID, seed=seed)
    masks = sample.stack().reshape(len(sample), -1)

    mask = rng.random((256, 256)) < 0.02
    yield "sq_edt 256x256", (mask,), kernels._sq_edt_numba, kernels._sq_edt_numpy

    idx = np.array([rng.choice(100, 3, replace=False) for _ in range(1000)])
    lower = kernels.pack_rows(masks[idx].all(axis=1))[:, None, :]
    upper = kernels.pack_rows(masks[idx].any(axis=1))[:, None, :]
    packed = kernels.pack_rows(masks)
    yield ("sandwich 1000 subsets x 100 probes", (lower, upper, packed),
           kernels._sandwich_counts_numba, kernels._sandwich_counts_numpy)

    src = masks[0].reshape(TABLE1_GRID.shape)[40:60, 40:60].copy()
    shifts = np.argwhere(masks[1].reshape(TABLE1_GRID.shape)[40:60, 40:60]).astype(np.int64)
    yield ("dilate_points 20x20 by disc", (src, shifts, 40, 40),
           kernels._dilate_points_numba, kernels._dilate_points_numpy)

    fields = np.stack([signed_distance_field(r).ravel() for r in sample])
    ranks = kernels.dense_ranks(np.ascontiguousarray(fields.T))
    ref = np.arange(0, 100, 2, dtype=np.int64)
    probes = np.arange(100, dtype=np.int64)
    yield ("rank_depth 100 sets on 100x100", (ranks, ref, probes),
           kernels._rank_depth_counts_numba, kernels._rank_depth_counts_numpy)


def end_to_end():
    code = ("import time;from setdepth.experiments import null_run;"
            "from setdepth._accel import backend;null_run(0, S=19);t=time.perf_counter();"
            "null_run(1, S=99);print(backend(), time.perf_counter()-t)")
    for flag in ("0", "1"):
        env = dict(os.environ, SETDEPTH_DISABLE_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True,
                             text=True, check=True).stdout.split()
        print(f"envelope test M=N=50 S=99 band   {out[0]:>6}: {float(out[1]):8.3f} s")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--end-to-end", action="store_true")
    args = ap.parse_args()
    print(f"{'kernel':40s} {'numba':>10s} {'numpy':>10s} {'speedup':>8s}")
    for name, inputs, fast, slow in cases():
        a, b = fast(*inputs), slow(*inputs)
        if not np.array_equal(a, b):
            raise SystemExit(f"{name}: numba and numpy results differ")
        tf, ts = _best(lambda: fast(*inputs), args.repeat), _best(lambda: slow(*inputs), args.repeat)
        print(f"{name:40s} {tf * 1e3:8.3f}ms {ts * 1e3:8.3f}ms {ts / tf:7.1f}x")
    if args.end_to_end:
        end_to_end()


if __name__ == "__main__":
    main()
