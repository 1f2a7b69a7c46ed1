"""Compare the compiled kernels against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--size 640x480] [--repeats 20]

Times each kernel on a synthetic frame of the given size and prints the
per-call medians plus the speedup of the compiled path. Sanity-checks that
both implementations agree before timing.
"""

import argparse
import time

import numpy as np

from openrgbt.kernels import available_backends


def timeit(fn, repeats):
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return sorted(times)[len(times) // 2]


def build_cases(width, height, rng):
    rgb = rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8)
    thermal = rng.integers(0, 256, size=(height, width), dtype=np.uint8)
    weights = rng.random((height, width))
    gray = rng.random((height, width)) * 255.0
    bits = (rng.random(height * width) > 0.6).astype(np.uint8)
    gt = rng.integers(0, 8, size=height * width).astype(np.int64)
    pred = rng.integers(0, 8, size=height * width).astype(np.int64)
    pred[rng.random(height * width) < 0.05] = 255

    return {
        "fuse_rgbt": lambda impl: impl.fuse_rgbt(rgb, thermal, weights),
        "window_variance(r=4)": lambda impl: impl.window_variance(gray, 4),
        "rle_encode": lambda impl: impl.rle_encode(bits),
        "rle_decode": lambda impl: impl.rle_decode(
            np.asarray(impl.rle_encode(bits), dtype=np.int64), bits.size
        ),
        "confusion_tally": lambda impl: impl.confusion_tally(gt, pred, 8, 255),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--size", default="640x480", help="frame size WxH")
    parser.add_argument("--repeats", type=int, default=20)
    args = parser.parse_args()
    width, height = (int(v) for v in args.size.lower().split("x"))

    backends = available_backends()
    if "native" not in backends:
        print("compiled kernels unavailable; only timing the fallback")
    cases = build_cases(width, height, np.random.default_rng(0))

    print(f"frame {width}x{height}, median of {args.repeats} runs\n")
    header = f"{'kernel':<22}" + "".join(f"{name:>12}" for name in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for name, call in cases.items():
        row = f"{name:<22}"
        times = {}
        for backend_name, impl in backends.items():
            reference = np.asarray(cases[name](backends["fallback"]))
            got = np.asarray(call(impl))
            assert np.allclose(got.astype(np.float64), reference.astype(np.float64), atol=1e-6), (
                f"{backend_name} disagrees on {name}"
            )
            times[backend_name] = timeit(lambda: call(impl), args.repeats)
            row += f"{times[backend_name] * 1e3:>10.2f}ms"
        if "native" in times:
            row += f"{times['fallback'] / times['native']:>9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
