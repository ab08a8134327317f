"""Compare the numba and pure-numpy kernel paths.

Usage::

    python3 benchmarks/bench_kernels.py [--mesh 128] [--repeat 5]

Each kernel is run once per backend to warm up (numba compiles on first
call), then timed ``--repeat`` times; the best time is reported together
with the maximum difference between the two backends' outputs.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from ellopt import _kernels
from ellopt import mesh_fem as fem
from ellopt.tensor import random_spd


def best_time(fn, repeat):
    fn()  # warm-up / compile
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(m: int):
    rng = np.random.default_rng(0)
    mesh = fem.build_mesh(m)
    coeff = np.stack([random_spd(rng, 2) for _ in range(mesh.n_elements)])
    reaction = rng.uniform(0.0, 2.0, mesh.n_elements)
    system = fem.assemble(mesh, coeff, reaction)
    b = rng.standard_normal(system.matrix.shape[0])
    x0 = np.zeros_like(b)
    return {
        "element_matrices": lambda: _kernels.element_matrices(mesh.grads, mesh.areas, coeff, reaction),
        "pcg": lambda: _kernels.pcg(system.matrix, b, x0, 1e-10, 20 * b.size)[0],
        "decimal_count_2d": lambda: _kernels.decimal_count(np.array([3, -2]), 0.3, 2000),
        "decimal_count_3d": lambda: _kernels.decimal_count(np.array([2, -3, 5]), 0.7, 200),
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--mesh", type=int, default=128)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    if not _kernels.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    previous = _kernels.backend()
    print(f"{'kernel':<20}{'numpy [s]':>12}{'numba [s]':>12}{'speedup':>10}{'max |diff|':>14}")
    try:
        for name, fn in cases(args.mesh).items():
            res, times = {}, {}
            for be in ("numpy", "numba"):
                _kernels.set_backend(be)
                times[be] = best_time(fn, args.repeat)
                res[be] = np.asarray(fn(), dtype=float)
            diff = float(np.max(np.abs(res["numpy"] - res["numba"])))
            print(f"{name:<20}{times['numpy']:>12.4f}{times['numba']:>12.4f}"
                  f"{times['numpy'] / times['numba']:>10.2f}{diff:>14.3e}")
    finally:
        _kernels.set_backend(previous)


if __name__ == "__main__":
    main()
