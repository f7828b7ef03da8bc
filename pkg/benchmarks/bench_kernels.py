"""Time the compiled kernels against the numpy fallback and check parity.

Run with ``python benchmarks/bench_kernels.py [--repeat N]``.
"""
import argparse
import time

import numpy as np

from roughwave import _pykernels

try:
    from roughwave import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def _cases(rng):
    m, n, d = 4, 4096, 3
    a = rng.standard_normal((m, n, d))
    b = rng.standard_normal((m, n, d))
    cells = rng.standard_normal((m, n, d, d))
    x = np.cumsum(rng.standard_normal((m, n + 1, d)), axis=1)
    t = np.linspace(0.0, 1.0, n + 1)
    H = 0.4
    k = np.arange(2048, dtype=float)
    gam = 0.5 * ((k + 1) ** (2 * H) - 2 * k ** (2 * H) + np.abs(k - 1) ** (2 * H))
    z = rng.standard_normal((2, 2048))
    nl, K = 8192, 2
    dG = 1e-2 * rng.standard_normal((nl, K, K))
    dcurl = 1e-3 * rng.standard_normal((nl, K, K, 2))
    F = rng.standard_normal((nl + 1, K, K, 2))
    z0 = np.array([1.0, -0.5])
    return {
        "outer_prefix": ((a, b, cells), 1e-14),
        "dyadic_sup": ((x, t, 0.4), 0.0),
        "hosking_fgn": ((gam, z), 1e-12),
        "linear_recurrence": ((z0, dG, dcurl, F), 1e-12),
    }


def _time(fn, args, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    cases = _cases(np.random.default_rng(args.seed))
    print(f"{'kernel':20s} {'python [s]':>12s} {'cython [s]':>12s} {'speedup':>9s} {'max rel diff':>13s}")
    ok = True
    for name, (fargs, tol) in cases.items():
        tp, op = _time(getattr(_pykernels, name), fargs, args.repeat)
        if _ckernels is None:
            print(f"{name:20s} {tp:12.4g} {'n/a':>12s}")
            continue
        tc, oc = _time(getattr(_ckernels, name), fargs, args.repeat)
        diff = float(np.max(np.abs(op - oc)) / max(1.0, float(np.max(np.abs(op)))))
        ok &= diff <= tol
        print(f"{name:20s} {tp:12.4g} {tc:12.4g} {tp / tc:9.1f} {diff:13.2e}")
    if not ok:
        raise SystemExit("backends disagree beyond tolerance")


if __name__ == "__main__":
    main()
