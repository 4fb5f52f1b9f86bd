"""Time the jitted hot kernels against their pure-numpy fallbacks.

Runs each kernel pair from ``wetchicken.accel`` on representative problem
sizes, checks that both implementations agree to float tolerance, and
prints a speedup table. The numba path is warmed up first so compilation
time is not counted.

Usage::

    python3 benchmarks/bench_accel.py [--repeats 30]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from wetchicken import accel


def best_of(fn, args, repeats: int) -> float:
    """Minimum wall time over ``repeats`` calls, in seconds."""
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_pair(name, fn_numpy, fn_numba, args, repeats, check):
    t_np = best_of(fn_numpy, args, repeats)
    if fn_numba is None:
        print(f"{name:<34} numpy {t_np * 1e3:8.3f} ms   numba unavailable")
        return
    fn_numba(*args)  # warmup / compile
    t_nb = best_of(fn_numba, args, repeats)
    check(fn_numpy(*args), fn_numba(*args))
    print(f"{name:<34} numpy {t_np * 1e3:8.3f} ms   "
          f"numba {t_nb * 1e3:8.3f} ms   speedup {t_np / t_nb:6.2f}x")


def check_close(a, b):
    a = a if isinstance(a, tuple) else (a,)
    b = b if isinstance(b, tuple) else (b,)
    for x, y in zip(a, b):
        np.testing.assert_allclose(x, y, rtol=1e-10, atol=1e-12)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=30,
                        help="timing repetitions per kernel (best-of)")
    args = parser.parse_args()

    print(f"numba available: {accel.NUMBA_AVAILABLE}   "
          f"active path: {'numba' if accel.USE_NUMBA else 'numpy'}")
    rng = np.random.default_rng(0)

    for n, m in [(64, 100), (250, 100), (1000, 100)]:
        A = rng.standard_normal((n, 4))
        B = rng.standard_normal((m, 4))
        inv_ls = rng.uniform(0.5, 2.0, size=4)
        bench_pair(f"ard_sqexp        ({n:>4} x {m})",
                   accel.ard_sqexp_numpy, accel.ard_sqexp_numba,
                   (A, B, inv_ls, 1.3), args.repeats, check_close)

    for n, m in [(64, 100), (250, 100), (1000, 100)]:
        A = rng.standard_normal((n, 4))
        B = rng.standard_normal((m, 4))
        inv_ls = rng.uniform(0.5, 2.0, size=4)
        K = accel.ard_sqexp_numpy(A, B, inv_ls, 1.3)
        G = rng.standard_normal(K.shape)
        bench_pair(f"ard_sqexp_vjp    ({n:>4} x {m})",
                   accel.ard_sqexp_vjp_numpy, accel.ard_sqexp_vjp_numba,
                   (G, K, A, B, inv_ls), args.repeats, check_close)

    for n in [1_000, 100_000]:
        x = rng.uniform(0.0, 5.0, size=n)
        y = rng.uniform(0.0, 5.0, size=n)
        ax = rng.uniform(-1.0, 1.0, size=n)
        ay = rng.uniform(-1.0, 1.0, size=n)
        tau = rng.uniform(-1.0, 1.0, size=n)
        bench_pair(f"chicken_step     (n={n:>7,})",
                   accel.chicken_step_numpy, accel.chicken_step_numba,
                   (x, y, ax, ay, tau), args.repeats, check_close)


if __name__ == "__main__":
    main()
