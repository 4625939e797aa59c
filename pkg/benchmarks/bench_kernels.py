"""Time the numba kernels against their pure-numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--threads N]

The first numba call compiles (or loads the cache) and is excluded.
"""

import argparse
import time

import numpy as np

from hilfer import _accel, _kernels


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases():
    z_small = np.ascontiguousarray(-np.geomspace(1e-3, 4.0, 20_000))
    z_mid = np.ascontiguousarray(-np.geomspace(4.0, 50.0, 20_000))
    t = np.linspace(0.0, 1.0, 2049) ** 2
    f = np.ascontiguousarray(np.stack([np.cos(k * t) for k in range(8)], axis=1))
    c = np.ascontiguousarray(f[:-1])
    return {
        "ml_series  (20k points)": ("ml_series", (0.5, 0.75, z_small, False)),
        "ml_contour (20k points)": ("ml_contour", (0.5, 0.75, z_mid, 0)),
        "rl_linear  (2048 cells x 8)": ("rl_linear", (t, f, 0.5, 0)),
        "rl_cellwise(2048 cells x 8)": ("rl_cellwise", (t, c, 0.5)),
    }


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--threads", type=int, default=None)
    args = p.parse_args()
    if not _accel.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    threads = _accel.set_threads(args.threads)
    print(f"numba threads: {threads}")
    print(f"{'kernel':30s} {'numpy [s]':>11s} {'numba [s]':>11s} {'speed-up':>9s}")
    for name, (base, fargs) in cases().items():
        t_np = best_of(lambda: getattr(_kernels, base + "_numpy")(*fargs), args.repeat)
        t_nb = best_of(lambda: getattr(_kernels, base + "_numba")(*fargs), args.repeat)
        print(f"{name:30s} {t_np:11.4f} {t_nb:11.4f} {t_np / t_nb:8.1f}x")


if __name__ == "__main__":
    main()
