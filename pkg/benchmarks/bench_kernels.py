"""Time the compiled pair kernels against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--n 2000] [--repeat 5]
"""

import argparse
import time

import numpy as np

from pcfortho import _kernels_py
from pcfortho.core import ObservationWindow, PointPattern, _cell_grid

try:
    from pcfortho import _kernels as _kernels_c
except ImportError:
    _kernels_c = None


def _best(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=2000, help="points in the unit square")
    ap.add_argument("--r-max", type=float, default=0.125)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(0)
    win = ObservationWindow((0.0, 0.0), (1.0, 1.0))
    pat = PointPattern(rng.uniform(size=(args.n, 2)), win)
    grid = _cell_grid(pat.points, win, args.r_max)
    pts = np.ascontiguousarray(pat.points)

    backends = {"python": _kernels_py}
    if _kernels_c is not None:
        backends["cython"] = _kernels_c
    else:
        print("compiled extension not built; timing the fallback only")

    i, j, dist = _kernels_py.upper_pairs(pts, *grid, 1e-3, args.r_max)
    d_sorted = np.ascontiguousarray(np.sort(np.concatenate([dist, dist])))
    w = np.ascontiguousarray(rng.uniform(size=d_sorted.size))
    t = np.linspace(0.002, args.r_max - 0.02, 512)

    print(f"n={args.n}, pairs (i<j)={i.size}")
    print(f"{'kernel':<14}" + "".join(f"{name:>12}" for name in backends))
    rows = {
        "upper_pairs": lambda k: k.upper_pairs(pts, *grid, 1e-3, args.r_max),
        "kernel_sums": lambda k: k.kernel_sums(t, d_sorted, w, 0.015, 1),
    }
    for label, call in rows.items():
        times = [_best(lambda k=k: call(k), args.repeat) for k in backends.values()]
        print(f"{label:<14}" + "".join(f"{x * 1e3:10.2f}ms" for x in times))


if __name__ == "__main__":
    main()
