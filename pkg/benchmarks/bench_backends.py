"""Compare the compiled and pure-numpy kernel backends.

Usage: python3 benchmarks/bench_backends.py [--sizes 256 1024 4096] [--dim 8]

Prints the median wall time of each hot kernel per backend, the speed-up
and the largest absolute difference between the two results.
"""

import argparse
import statistics
import time

import numpy as np

from tessel import _backend, _pykernels

try:
    from tessel import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def _time(fn, reps):
    out, times = None, []
    for _ in range(reps):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[256, 1024, 4096])
    ap.add_argument("--dim", type=int, default=8)
    ap.add_argument("--reps", type=int, default=5)
    args = ap.parse_args(argv)
    if _ckernels is None:
        print("compiled backend not available; only the numpy backend can run")
        return 1
    print(f"active backend at import: {_backend.BACKEND}")
    rng = np.random.default_rng(0)
    theta = np.full(args.dim, 0.5)
    cases = {
        "matern_tensor": lambda mod, A, B: mod.matern_tensor(A, B, theta, 5),
        "matern_aniso": lambda mod, A, B: mod.matern_aniso(A, B, theta, 5),
        "distances": lambda mod, A, B: mod.distances(A, B),
    }
    print(f"{'kernel':<14} {'n':>6} {'numpy [s]':>10} {'cython [s]':>11} {'speed-up':>9} {'max diff':>10}")
    for n in args.sizes:
        A = rng.random((n, args.dim))
        B = rng.random((n, args.dim))
        for name, fn in cases.items():
            tp, rp = _time(lambda: fn(_pykernels, A, B), args.reps)
            tc, rc = _time(lambda: fn(_ckernels, A, B), args.reps)
            diff = float(np.max(np.abs(rp - rc)))
            print(f"{name:<14} {n:>6} {tp:>10.4f} {tc:>11.4f} {tp / tc:>9.2f} {diff:>10.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
