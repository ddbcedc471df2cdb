"""Time the numba kernels against their pure-numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--N 10000 100000]

Checks that both paths agree bit for bit before timing. The numba path is
warmed up once so compilation is not counted.
"""
import argparse
import time

import numpy as np

from utlearn import _kernels


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=50)
    ap.add_argument("--N", type=int, nargs="+", default=[10000, 100000])
    ap.add_argument("--s", type=int, nargs="+", default=[5, 10])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    if not _kernels.HAVE_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")

    rng = np.random.default_rng(0)
    print(f"{'kernel':<18}{'N':>8}{'s':>4}{'numpy [ms]':>13}{'numba [ms]':>13}{'speedup':>9}")
    for bigN in args.N:
        x = rng.standard_normal((args.n, bigN))
        u = rng.random((bigN, max(args.s)))
        for s in args.s:
            cases = [
                ("threshold", _kernels.threshold_columns_numpy, _kernels.threshold_columns_numba, (x, s)),
                ("fisher_yates", _kernels.fisher_yates_numpy, _kernels.fisher_yates_numba,
                 (np.ascontiguousarray(u[:, :s]), args.n)),
            ]
            for name, f_np, f_nb, call in cases:
                a, b = f_np(*call), f_nb(*call)
                if not np.array_equal(a, b):
                    raise SystemExit(f"{name}: numba and numpy paths disagree")
                t_np = best_of(lambda: f_np(*call), args.repeat)
                t_nb = best_of(lambda: f_nb(*call), args.repeat)
                print(f"{name:<18}{bigN:>8}{s:>4}{1e3 * t_np:>13.2f}{1e3 * t_nb:>13.2f}{t_np / t_nb:>9.1f}")


if __name__ == "__main__":
    main()
