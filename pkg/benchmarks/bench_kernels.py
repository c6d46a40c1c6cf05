"""Compare the compiled and numpy kernel backends.

Usage: python benchmarks/bench_kernels.py [--particles N] [--repeat R]
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from bpslam._kernels import _pykernels

try:
    from bpslam._kernels import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def _cases(n_particles: int, rng):
    P = rng.uniform(0, 14, size=(n_particles, 2))
    A = rng.uniform(-10, 25, size=(n_particles, 2))
    z = rng.uniform(0, 30, size=8)
    inv2s2 = np.full(8, 0.5 / 0.15**2)
    scale = np.full(8, 0.95 / (np.sqrt(2 * np.pi) * 0.15 / 30.0))
    K, M = 8, 8
    beta = rng.uniform(0.01, 1, size=(K, M + 1))
    xi = rng.uniform(0.01, 1, size=(M, K + 1))
    w = rng.random(n_particles)
    w /= w.sum()
    return {
        "likelihood_matrix": lambda m: m.likelihood_matrix(P, A, z, inv2s2, scale),
        "da_ratio": lambda m: m.da_ratio(beta, xi, 1e-7, 1000),
        "systematic_resample": lambda m: m.systematic_resample(w, 0.37),
    }


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--particles", type=int, default=10_000)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args(argv)
    cases = _cases(args.particles, np.random.default_rng(0))
    backends = [("python", _pykernels)] + ([("cython", _ckernels)] if _ckernels else [])
    print(f"{'kernel':<22}" + "".join(f"{name:>14}" for name, _ in backends) + f"{'speedup':>10}")
    for label, fn in cases.items():
        times = []
        for _, mod in backends:
            fn(mod)
            times.append(min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat)))
        row = f"{label:<22}" + "".join(f"{t * 1e3:>11.3f} ms" for t in times)
        if len(times) == 2:
            row += f"{times[0] / times[1]:>9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
