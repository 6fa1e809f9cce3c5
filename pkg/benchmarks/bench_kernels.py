"""Time the numba kernels against the numpy fallback.

Run with ``python3 benchmarks/bench_kernels.py``. Each kernel is called
once to trigger compilation, then timed over several repetitions; the best
time is reported together with the largest difference between backends.
"""

import argparse
import time

import numpy as np

from mepqlab import _kernels


def best_of(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def cases(rng):
    x = np.linspace(-12, 12, 2048)
    a = rng.standard_normal((512, 512))
    q0, p0 = rng.standard_normal(20_000), rng.standard_normal(20_000)
    dcoef = np.array([0.0, 1.0, 0.0, 0.2])
    t = np.linspace(0, 5, 6)
    yield ("hermite_functions n=200",
           lambda: _kernels.hermite_functions_numpy(x, 200, 1.0, 1.0),
           lambda: _kernels._hermite_nb(x, 200, 1.0, 1.0))
    yield ("wrapped_diagonal_sums 512x512",
           lambda: _kernels.wrapped_diagonal_sums_numpy(a),
           lambda: _kernels._wrapped_nb(a))
    yield ("ensemble_dopri 20000 particles",
           lambda: _kernels.ensemble_dopri_numpy(q0, p0, 1.0, dcoef, t)[0],
           lambda: _kernels.ensemble_dopri(q0, p0, 1.0, dcoef, t)[0])


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if not _kernels.HAVE_NUMBA or _kernels.jit_disabled():
        print("numba unavailable or disabled; nothing to compare")
        return
    rng = np.random.default_rng(0)
    print(f"{'kernel':34s} {'numpy [s]':>10s} {'numba [s]':>10s} {'speedup':>8s} {'max diff':>9s}")
    for name, slow, fast in cases(rng):
        fast()  # compile
        t_np, r_np = best_of(slow, args.repeat)
        t_nb, r_nb = best_of(fast, args.repeat)
        diff = float(np.max(np.abs(r_np - r_nb)))
        print(f"{name:34s} {t_np:10.4f} {t_nb:10.4f} {t_np / t_nb:8.1f} {diff:9.1e}")


if __name__ == "__main__":
    main()
