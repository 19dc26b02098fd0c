"""Time the compiled kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from gaitgts import _fallback

try:
    from gaitgts import _kernels
except ImportError:
    _kernels = None


def cases(rng):
    frames = (rng.random((30, 240, 240)) < 0.2).astype(np.uint8)
    src = (rng.random((480, 200)) < 0.3).astype(np.uint8)
    rows = np.arange(240) * 480 // 240
    cols = np.arange(100) * 200 // 100
    canvas = np.zeros((240, 320), np.uint8)
    return {
        "accumulate_frames 30x240x240": lambda m: m.accumulate_frames(frames),
        "resample_any 480x200 -> 240x100": lambda m: m.resample_any(src, rows, cols),
        "fill_capsule r=6 x100": lambda m: [m.fill_capsule(canvas, 40.0 + i, 30.0, 90.0, 200.0 - i, 6.0, 255)
                                            for i in range(100)],
        "fill_ellipse 20x40 x100": lambda m: [m.fill_ellipse(canvas, 160.0, 50.0 + i, 20.0, 40.0, 255)
                                              for i in range(100)],
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"{'kernel':36s} {'python ms':>10s} {'compiled ms':>12s} {'speedup':>8s}")
    for name, fn in cases(rng).items():
        py = min(timeit.repeat(lambda: fn(_fallback), number=1, repeat=args.repeat)) * 1e3
        if _kernels is None:
            print(f"{name:36s} {py:10.2f} {'n/a':>12s}")
            continue
        cy = min(timeit.repeat(lambda: fn(_kernels), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:36s} {py:10.2f} {cy:12.2f} {py / cy:7.1f}x")


if __name__ == "__main__":
    main()
