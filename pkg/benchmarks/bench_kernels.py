"""Time the compiled kernels against the pure-Python fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from stvae import _pykernels

try:
    from stvae import _ckernels
except ImportError:
    _ckernels = None


def cases(n: int):
    rng = np.random.default_rng(0)
    alpha = rng.uniform(0.3, 20.0, (n, 1))
    z = rng.gamma(alpha)
    x = rng.uniform(0.05, 50.0, n)
    spins = np.where(rng.random((64, 28, 28)) < 0.7, 1, -1).astype(np.int8)
    table = 1.0 / (1.0 + np.exp(-2.0 * (0.35 * np.arange(-4, 5) + 0.2)))
    u = rng.random((64, 28, 28))
    return {
        f"sample_gamma ({n} draws)": lambda k: k.sample_gamma(np.random.PCG64(1), alpha),
        f"implicit_grad_array ({n})": lambda k: k.implicit_grad_array(z, alpha),
        f"digamma_array ({n})": lambda k: k.digamma_array(x),
        "ising_sweep (64 lattices)": lambda k: k.ising_sweep(spins, table, u),
    }


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("-n", type=int, default=20_000)
    args = ap.parse_args()
    if _ckernels is None:
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation`")
    print(f"{'kernel':32s} {'python ms':>10s} {'cython ms':>10s} {'speedup':>8s}")
    for name, fn in cases(args.n).items():
        py = min(timeit.repeat(lambda: fn(_pykernels), number=1, repeat=args.repeat)) * 1e3
        cy = min(timeit.repeat(lambda: fn(_ckernels), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:32s} {py:10.1f} {cy:10.2f} {py / cy:7.0f}x")


if __name__ == "__main__":
    main()
