"""Compiled vs numpy kernels: wall time and agreement.

    python benchmarks/bench_kernels.py [--paths N] [--steps N] [--repeat N]
"""

import argparse
import time

import numpy as np

from containment import _pykernels
from containment.drift import DriftSpec

try:
    from containment import _kernels
except ImportError:  # extension not built
    _kernels = None


def _time(fn, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def cases(n_paths, n_steps):
    ou = DriftSpec.ou(1.0)
    expr = DriftSpec.expression("-x - x^3")
    rad = DriftSpec.radial("-2*r", 2)
    x1, x2 = np.zeros(1), np.zeros(2)
    dt = 1e-3
    yield "exit_steps ou bridge", lambda K: K.exit_steps(
        *ou.kernel_args(), 1, 1.0, x1, dt, n_steps, 2.0, True, 0, 1, 0, n_paths)
    yield "exit_steps expression", lambda K: K.exit_steps(
        *expr.kernel_args(), 1, 1.0, x1, dt, n_steps, 2.0, False, 0, 1, 0, n_paths)
    yield "exit_steps radial d=2 rotated", lambda K: K.exit_steps(
        *rad.kernel_args(), 2, 1.0, x2, dt, n_steps, 2.0, False, 1, 1, 0, n_paths)
    yield "terminal_states ou", lambda K: K.terminal_states(
        *ou.kernel_args(), 1, 1.0, x1, dt, n_steps, 1, 0, n_paths)
    yield "coupled_violation sign", lambda K: K.coupled_violation(
        *DriftSpec.ou(2.0).kernel_args(), *ou.kernel_args(), 1, 1.0, dt, n_steps, 4.0, 1, 0,
        n_paths, 1)
    w = np.exp(-0.5 * np.linspace(-4, 4, 16009) ** 2)
    b = np.ones(16008)
    yield "flux_solve_dirichlet n=16008", lambda K: K.flux_solve_dirichlet(w, b, 8 / 16009)


def _maxdiff(a, b):
    if isinstance(a, tuple):
        return max(_maxdiff(x, y) for x, y in zip(a, b))
    a, b = np.asarray(a, float), np.asarray(b, float)
    scale = max(1.0, float(np.nanmax(np.abs(a))))
    return float(np.nanmax(np.abs(a - b))) / scale


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--paths", type=int, default=4096)
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args(argv)
    if _kernels is None:
        print("compiled extension not available; only the numpy backend can run")
    print(f"{'kernel':34s} {'cython s':>10s} {'numpy s':>10s} {'speedup':>8s} {'rel diff':>10s}")
    for name, fn in cases(args.paths, args.steps):
        tp, op = _time(lambda: fn(_pykernels), args.repeat)
        if _kernels is None:
            print(f"{name:34s} {'-':>10s} {tp:10.4f}")
            continue
        tc, oc = _time(lambda: fn(_kernels), args.repeat)
        print(f"{name:34s} {tc:10.4f} {tp:10.4f} {tp / tc:8.1f} {_maxdiff(oc, op):10.2e}")


if __name__ == "__main__":
    main()
