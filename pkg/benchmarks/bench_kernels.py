"""Time the numba and numpy kernel backends against each other.

The backend is fixed at import time, so each one runs in its own
subprocess with LIEAPP_DISABLE_NUMBA set accordingly.

    python3 benchmarks/bench_kernels.py [--size 128] [--repeat 5]
"""
import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def _best(fn, repeat):
    fn()  # warm-up, includes JIT compilation
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def worker(size, repeat):
    from lieapp import _kernels
    from lieapp.cli_io.catalog import SurfaceSpec, generate
    from lieapp.forms import SpanningTree
    from lieapp.gauge_transforms import build_family, trivialize
    from lieapp.legendre import build_legendre
    from lieapp.omega_structure import OmegaData, middle_potential

    rng = np.random.default_rng(0)
    # edge-sized generators, like h * eta on a fine grid
    A = rng.normal(scale=0.05, size=(size * size, 6, 6))
    W = A - A.transpose(0, 2, 1)

    grid = build_legendre(generate(SurfaceSpec("catenoid", size, size)))
    eta = middle_potential(grid, OmegaData.constant(grid, 1), certify=False)
    tree = SpanningTree(grid.shape)
    fam = build_family(grid, eta, 0.5, tree)

    res = {
        "backend": _kernels.BACKEND,
        "expm_batch": _best(lambda: _kernels.expm_batch(W, 1e-14), repeat),
        "trivialize": _best(lambda: trivialize(fam), repeat),
        "build_family": _best(lambda: build_family(grid, eta, 0.5, tree), repeat),
    }
    print(json.dumps(res))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--size", type=int, default=128)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    a = ap.parse_args()
    if a.worker:
        worker(a.size, a.repeat)
        return
    rows = []
    for disable in ("0", "1"):
        env = dict(os.environ, LIEAPP_DISABLE_NUMBA=disable)
        out = subprocess.run([sys.executable, __file__, "--worker", "--size", str(a.size),
                              "--repeat", str(a.repeat)], env=env, check=True,
                             capture_output=True, text=True).stdout
        rows.append(json.loads(out.strip().splitlines()[-1]))
    print(f"grid {a.size}x{a.size}, best of {a.repeat}")
    print(f"{'kernel':<14}" + "".join(f"{r['backend']:>12}" for r in rows) + f"{'speedup':>10}")
    for key in ("expm_batch", "trivialize", "build_family"):
        fast, slow = rows[0][key], rows[1][key]
        print(f"{key:<14}{fast * 1e3:>10.2f}ms{slow * 1e3:>10.2f}ms{slow / fast:>9.1f}x")


if __name__ == "__main__":
    main()
