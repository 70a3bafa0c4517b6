"""Time the compiled and pure-Python kernel backends on the same inputs.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 3]

Each row reports the best wall time per backend, the speed-up and the largest
absolute difference between the two outputs.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from qarch.kernels import Q_QUADRATIC, get_backend


def best_of(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def case_fill_block(n: int, W: int):
    rng = np.random.default_rng(0)
    b = 0.5 * np.arange(1, W + 1, dtype=float) ** -1.5
    zeta = rng.standard_normal(n)

    def run(kern):
        r, x, s = np.zeros(n), np.zeros(n), np.zeros(n)
        kern.fill_block(b, zeta, 0.5, Q_QUADRATIC, 1.0, 1.0, r, x, s, 0, n)
        return r
    return f"fill_block n={n} W={W}", run


def case_rcar1(n: int):
    rng = np.random.default_rng(1)
    eps, eta = rng.standard_normal(n), rng.standard_normal(n)

    def run(kern):
        out = np.zeros(n)
        kern.rcar1(eps, eta, 0.8, 0.5, out)
        return out
    return f"rcar1 n={n}", run


def case_renewal(K: int):
    alpha = 0.5 * np.arange(1, K + 1, dtype=float) ** -2.0

    def run(kern):
        out = np.zeros(K)
        kern.renewal(alpha, out)
        return out
    return f"renewal K={K}", run


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    py, cy = get_backend("python"), get_backend("cython")
    cases = [case_fill_block(20_000, 1), case_fill_block(20_000, 64), case_fill_block(5_000, 1000),
             case_rcar1(200_000), case_renewal(5_000)]
    print(f"{'case':<28}{'python s':>11}{'cython s':>11}{'speed-up':>10}{'max |diff|':>12}")
    for name, run in cases:
        diff = float(np.max(np.abs(run(py) - run(cy))))
        tp = best_of(lambda: run(py), args.repeat)
        tc = best_of(lambda: run(cy), args.repeat)
        print(f"{name:<28}{tp:>11.4f}{tc:>11.4f}{tp / tc:>10.1f}{diff:>12.1e}")


if __name__ == "__main__":
    main()
