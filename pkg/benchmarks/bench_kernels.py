"""Timing of the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--n 801 1201 2001] [--repeat 5]

Both backends run on the same inputs (the standard Gaussian pair under
``V = x^2/2``); the largest difference between their outputs is printed
next to each timing.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from entropic_hwi import _core, semigroup
from entropic_hwi._core import _fallback
from entropic_hwi.functionals import gaussian
from entropic_hwi.space import Grid1D, PotentialSpec, build_generator

try:
    from entropic_hwi._core import _ckernels
except ImportError:
    _ckernels = None


def _best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def _cases(n):
    gen = build_generator(Grid1D(-8, 8, n), PotentialSpec.quadratic(1.0))
    a = gaussian(gen.measure, -0.2, 0.5)
    b = gaussian(gen.measure, 0.2, 0.55)
    log_p = np.ascontiguousarray(semigroup.log_kernel(gen, 0.2))
    lo, mid, hi = semigroup._stochastic_log_diagonals(gen)
    lam_t = gen.rate_bound * 0.05
    x = gen.grid.nodes
    pa, pb = a.probabilities, b.probabilities
    return {
        "lse_matvec": lambda m: m.lse_matvec(log_p, a.log_rho),
        "log_uniformized_apply": lambda m: m.log_uniformized_apply(lo, mid, hi, a.log_rho, lam_t, False)[0],
        "w2_sweep": lambda m: m.w2_sweep(x, pa, pb),
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, nargs="+", default=[801, 1201, 2001])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    if _ckernels is None:
        print("compiled extension not built; run `pip install -e . --no-build-isolation` first")
        return 1
    print(f"active backend: {_core.BACKEND}")
    print(f"{'kernel':<24}{'n':>6}{'numpy [ms]':>12}{'cython [ms]':>13}{'speedup':>9}{'max diff':>11}")
    for n in args.n:
        for name, call in _cases(n).items():
            ref, fast = call(_fallback), call(_ckernels)
            diff = float(np.nanmax(np.abs(np.asarray(ref) - np.asarray(fast))))
            t_py = _best(lambda: call(_fallback), args.repeat)
            t_c = _best(lambda: call(_ckernels), args.repeat)
            print(f"{name:<24}{n:>6}{1e3 * t_py:>12.3f}{1e3 * t_c:>13.3f}{t_py / t_c:>9.1f}{diff:>11.1e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
