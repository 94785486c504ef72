"""Time the numba kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--n 2048] [--repeat 5]

Each kernel runs once untimed (numba compilation) and then ``repeat`` times;
the best wall time is reported.
"""
import argparse
import time

import numpy as np

from vortexdamp import _kernels
from vortexdamp.biot_savart import get_operator
from vortexdamp.evolution import EvolveOptions, evolve
from vortexdamp.grid import ModeField, make_grid
from vortexdamp.vortex import build_gaussian_vortex


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(n):
    v = build_gaussian_vortex()
    g = make_grid(1e-4, 40.0, n)
    r = g.nodes
    w = ModeField(2, r**2 * np.exp(-r**2), g)
    op = get_operator(g, 2)
    rng = np.random.default_rng(0)
    m = 64
    lo = rng.normal(size=(m, n)) + 0j
    up = rng.normal(size=(m, n)) + 0j
    di = 4 + rng.normal(size=(m, n)) + 1j * rng.normal(size=(m, n))
    rhs = rng.normal(size=(m, n)) + 1j * rng.normal(size=(m, n))
    out = np.empty_like(rhs)

    def make(impl):
        return {
            "bs_apply": lambda: op.apply(w.values, impl),
            "rk4 (t=10)": lambda: evolve(v, 2, w, [10.0], EvolveOptions(impl=impl)),
            f"thomas ({m} rows)": lambda: impl.thomas_batch(lo, di, up, rhs, out),
        }
    return make


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=2048)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if _kernels.numba_impl is None:
        raise SystemExit("numba is not available")
    make = cases(args.n)
    fast, slow = make(_kernels.numba_impl), make(_kernels.numpy_impl)
    print(f"N = {args.n}, best of {args.repeat}")
    print(f"{'kernel':<20}{'numba [s]':>12}{'numpy [s]':>12}{'speedup':>10}")
    for name in fast:
        a = best_of(fast[name], args.repeat)
        b = best_of(slow[name], args.repeat)
        print(f"{name:<20}{a:>12.4g}{b:>12.4g}{b / a:>10.1f}")


if __name__ == "__main__":
    main()
