#!/usr/bin/env python3
"""Compare the compiled propagation kernel against the NumPy fallback.

Run from the repository root after an editable install:

    python3 benchmarks/bench_kernels.py
"""

import time

import numpy as np

from adiapath import _pure
from adiapath._backend import BACKEND

try:
    from adiapath import _kernels
except ImportError:
    _kernels = None

CASES = [
    # (dim, steps): rotating-style 2x2 workloads dominate the heavy sweeps,
    # 3x3 and 6x6 cover the level-crossing and paired-system runs.
    (2, 2_000_000),
    (3, 300_000),
    (6, 100_000),
]


def random_generators(rng, n, d):
    a = rng.normal(size=(n, d, d)) + 1j * rng.normal(size=(n, d, d))
    return 0.5 * (a + np.conjugate(np.swapaxes(a, -1, -2)))


def timed(fn, *args):
    t0 = time.perf_counter()
    out = fn(*args)
    return time.perf_counter() - t0, out


def main():
    rng = np.random.default_rng(20240817)
    print(f"selected backend: {BACKEND}")
    print(f"{'dim':>4} {'steps':>10} {'compiled':>10} {'pure':>10} {'ratio':>7} {'agree':>9}")
    for d, n in CASES:
        gens = random_generators(rng, n, d)
        h = np.full(n, 1e-3)
        psi = np.zeros(d, dtype=complex)
        psi[0] = 1.0
        tp, (psi_p, _) = timed(_pure.propagate, psi, gens, h)
        if _kernels is None:
            print(f"{d:>4} {n:>10} {'absent':>10} {tp:>9.3f}s {'':>7} {'':>9}")
            continue
        tc, (psi_c, _) = timed(_kernels.propagate, psi, gens, h)
        agree = np.abs(psi_c - psi_p).max()
        print(f"{d:>4} {n:>10} {tc:>9.3f}s {tp:>9.3f}s {tp / tc:>6.1f}x {agree:>9.1e}")


if __name__ == "__main__":
    main()
