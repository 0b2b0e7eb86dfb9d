"""Timing comparison of the numba and numpy kernel paths.

Run with ``python benchmarks/bench_kernels.py``.  Each kernel is called once
on both paths before timing so numba compilation is excluded, and the two
results are checked against each other.
"""
import argparse
import timeit

import numpy as np

from mildhjb import _kernels as K


def cases(rng, scale):
    A = rng.standard_normal((6, 6))
    field = rng.standard_normal((33, 33, 4))
    pts = rng.uniform(-1.2, 1.2, (20000 * scale, 2))
    p = rng.standard_normal((50000 * scale, 3))
    F = rng.standard_normal((8, 3))
    h = rng.uniform(0.0, 1.0, 8)
    return {
        "expm 6x6": (lambda: K.expm_numpy(A), lambda: K.expm_numba(A), 200),
        "interp 33x33 lattice": (lambda: K.interp_lattice_numpy(field, [-1, -1], [1 / 16, 1 / 16], pts)[0],
                                 lambda: K.interp_lattice_numba(field, [-1, -1], [1 / 16, 1 / 16], pts)[0],
                                 20),
        "finite_min 8 controls": (lambda: K.finite_min_numpy(p, F, h)[0],
                                  lambda: K.finite_min_numba(p, F, h)[0], 20),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scale", type=int, default=1, help="multiplies the point counts")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if not K.NUMBA_AVAILABLE:
        print("numba is not installed; only the numpy path is available")
        return 1
    rng = np.random.default_rng(0)
    print(f"{'kernel':<24}{'numpy [ms]':>12}{'numba [ms]':>12}{'speedup':>10}{'max diff':>12}")
    for name, (f_np, f_nb, number) in cases(rng, args.scale).items():
        diff = float(np.max(np.abs(f_np() - f_nb())))  # also warms up the jit
        t_np = min(timeit.repeat(f_np, number=number, repeat=args.repeat)) / number * 1e3
        t_nb = min(timeit.repeat(f_nb, number=number, repeat=args.repeat)) / number * 1e3
        print(f"{name:<24}{t_np:>12.4f}{t_nb:>12.4f}{t_np / t_nb:>10.2f}{diff:>12.1e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
