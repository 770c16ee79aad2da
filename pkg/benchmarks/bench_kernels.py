"""Time the numba kernels against their numpy/Python fallbacks.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 5]

Each kernel is called once untimed so JIT compilation is excluded, then the
best of ``--repeat`` runs is reported for both backends.
"""

import argparse
import time

import numpy as np

from wevade import _kernels as K
from wevade.metrics import gaussian_window
from wevade.postprocess.jpeg import decode, encode


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(rng):
    img = rng.random((128, 128, 3))
    plane = rng.random((128, 128))
    kernel = rng.random((7, 7))
    kernel /= kernel.sum()
    g = gaussian_window()
    data = encode(img, 75)
    return {
        "resize 128->256": (
            lambda: K.resize_bilinear_numpy(img, 256, 256),
            lambda: K.resize_bilinear_numba(img, 256, 256),
        ),
        "correlate 7x7": (
            lambda: K.correlate_reflect_numpy(img, kernel),
            lambda: K.correlate_reflect_numba(img, kernel),
        ),
        "ssim filter": (
            lambda: K.filter_valid_numpy(plane, g),
            lambda: K.filter_valid_numba(plane, g),
        ),
        "jpeg encode": (_with_backend(False, lambda: encode(img, 75)), _with_backend(True, lambda: encode(img, 75))),
        "jpeg decode": (_with_backend(False, lambda: decode(data)), _with_backend(True, lambda: decode(data))),
    }


def _with_backend(use_numba, fn):
    def run():
        saved = K.USE_NUMBA
        K.USE_NUMBA = use_numba
        try:
            return fn()
        finally:
            K.USE_NUMBA = saved

    return run


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    if K.numba is None:
        raise SystemExit("numba is not installed")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<18}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}")
    for name, (slow, fast) in cases(rng).items():
        t_slow = best_of(slow, args.repeat)
        t_fast = best_of(fast, args.repeat)
        print(f"{name:<18}{1e3 * t_slow:>12.2f}{1e3 * t_fast:>12.2f}{t_slow / t_fast:>9.1f}x")


if __name__ == "__main__":
    main()
