"""Compiled vs numpy kernels, plus one end-to-end solve per backend.

Usage::

    python benchmarks/bench_kernels.py [--repeat 5]

The kernel timings call ``sbcontract._ext`` and ``sbcontract._pykernels``
directly; the solve timing runs the CLI in a subprocess with
``SBCONTRACT_BACKEND`` set, so each run imports its own backend.
"""

import argparse
import os
import subprocess
import sys
import time
import timeit

import numpy as np

from sbcontract import _pykernels

try:
    from sbcontract import _ext
except ImportError:  # extension not built
    _ext = None


def _cases(rng):
    logK = rng.normal(scale=20.0, size=(1000, 1000))
    v = rng.normal(size=1000)
    P = rng.normal(size=(2000, 3))
    Q = rng.normal(size=(2000, 3))
    Z = rng.normal(size=(2000, 2))
    C = rng.normal(size=(500, 2))
    logc = rng.normal(size=500)
    return {
        "lse_rows 1000x1000": ("lse_rows", (logK, v)),
        "sqdist_extrema 2000x2000 (n=3)": ("sqdist_extrema", (P, Q)),
        "mixture_stats 2000 queries x 500 centers": ("mixture_stats", (Z, C, logc)),
    }


def _best(fn, args, repeat):
    return min(timeit.repeat(lambda: fn(*args), number=1, repeat=repeat))


def _solve_time(backend):
    env = dict(os.environ, SBCONTRACT_BACKEND=backend)
    t0 = time.perf_counter()
    subprocess.run([sys.executable, "-m", "sbcontract", "solve", "--scenario",
                    os.path.join(os.path.dirname(__file__), "..", "scenarios", "example1.toml")],
                   env=env, check=True, capture_output=True)
    return time.perf_counter() - t0


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)

    rng = np.random.default_rng(0)
    print(f"{'kernel':<44} {'python [ms]':>12} {'cython [ms]':>12} {'speedup':>8}")
    for label, (name, inputs) in _cases(rng).items():
        tp = _best(getattr(_pykernels, name), inputs, args.repeat)
        if _ext is None:
            print(f"{label:<44} {1e3 * tp:>12.2f} {'n/a':>12} {'':>8}")
            continue
        tc = _best(getattr(_ext, name), inputs, args.repeat)
        print(f"{label:<44} {1e3 * tp:>12.2f} {1e3 * tc:>12.2f} {tp / tc:>7.2f}x")

    print()
    print("example1 solve via the CLI (includes interpreter start-up):")
    for backend in ("python", "cython"):
        print(f"  {backend:<8} {_solve_time(backend):.2f} s")


if __name__ == "__main__":
    main()
