"""Time the numba kernels against the pure-Python fallback.

    python3 benchmarks/bench_jit.py [--repeat N]

The first JIT call includes compilation; it is reported separately.
"""
import argparse
import time

import numpy as np

from dhcsp import _jit
from dhcsp import ast as A
from dhcsp.parser import parse_expr
from dhcsp.reference import integrate_dde
from dhcsp.stepsize import com_stepsize_one

OPEN = A.DdeSpec(("d",), (parse_expr("2.0 - 3.14 * 0.18 ^ 2 * sqrt(9.8 * (d + d@0.1))"),))

CASES = {
    "reference RK4, T=10, dt=1e-4": lambda: integrate_dde(OPEN, 4.5, t_max=10.0, dt=1e-4)[0].x[-1],
    "step size search, T=10": lambda: com_stepsize_one(OPEN, 4.5, 0.1, 0.01, 10.0),
}


def clock(fn, repeat):
    best, out = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if _jit.numba is None:
        raise SystemExit("numba is not installed")
    print("%-32s %10s %10s %10s %8s" % ("case", "first", "jit", "python", "speedup"))
    for name, fn in CASES.items():
        _jit.enable_jit()
        t0 = time.perf_counter()
        fn()
        first = time.perf_counter() - t0
        fast, a = clock(fn, args.repeat)
        _jit.disable_jit()
        slow, b = clock(fn, 1)
        _jit.enable_jit()
        assert np.allclose(a, b, rtol=0, atol=1e-9), (a, b)
        print("%-32s %9.3fs %9.3fs %9.3fs %7.1fx" % (name, first, fast, slow, slow / fast))


if __name__ == "__main__":
    main()
