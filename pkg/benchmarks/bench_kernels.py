"""Time the numba and numpy paths of the permutation-pair kernels.

Usage: python benchmarks/bench_kernels.py [--repeat R] [--batch B]

The Gram contraction is timed on a batch the size of one scan point
(20000 Monte Carlo events by default); pair weights are timed per call.
Compilation time is excluded by a warm-up call.
"""
import argparse
import time

import numpy as np

from noonproj import _accel


def best_of(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def random_grams(rng, batch, n):
    a = rng.normal(size=(batch, n, n)) + 1j * rng.normal(size=(batch, n, n))
    g = a @ np.conj(np.swapaxes(a, 1, 2))
    d = np.sqrt(np.real(np.einsum("bii->bi", g)))
    return g / d[:, :, None] / d[:, None, :]


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--batch", type=int, default=20000)
    args = parser.parse_args(argv)

    rng = np.random.default_rng(0)
    paths = [False, True] if _accel.HAS_NUMBA else [False]
    if not _accel.HAS_NUMBA:
        print("numba unavailable or disabled; timing the numpy path only")
    print(f"{'kernel':<14}{'n':>3}{'numpy [ms]':>13}{'numba [ms]':>13}{'speedup':>10}")
    for n in (3, 4, 5):
        amp = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        grams = random_grams(rng, args.batch, n)
        weights = _accel.pair_weights(amp, use_numba=False)
        jobs = {
            "pair_weights": lambda use: _accel.pair_weights(amp, use_numba=use),
            "gram_contract": lambda use: _accel.gram_contract(grams, weights, use_numba=use),
        }
        for name, job in jobs.items():
            times = {}
            for use in paths:
                job(use)                      # warm-up (numba compiles here)
                times[use] = best_of(lambda: job(use), args.repeat) * 1e3
            if True in times:
                assert np.allclose(job(True), job(False), rtol=1e-12, atol=1e-12)
                print(f"{name:<14}{n:>3}{times[False]:>13.3f}{times[True]:>13.3f}"
                      f"{times[False] / times[True]:>9.1f}x")
            else:
                print(f"{name:<14}{n:>3}{times[False]:>13.3f}{'-':>13}{'-':>10}")


if __name__ == "__main__":
    main()
