"""Compare the compiled mask kernels against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--frames N]

Times the four hot operations (RLE encode/decode, intersection count, union
accumulate) on video-sized masks (1280x720) and on the desk-scale test size
(64x64), printing per-call times and the speedup of the compiled path.
"""

import argparse
import time

import numpy as np

from statetrack.kernels import _py

try:
    from statetrack.kernels import _cy
except ImportError:
    _cy = None


def _blob_mask(rng, h, w):
    """A mask with long runs, like a real segmentation (not salt-and-pepper)."""
    ys, xs = np.ogrid[0:h, 0:w]
    cx, cy = rng.uniform(0.3, 0.7) * w, rng.uniform(0.3, 0.7) * h
    r = rng.uniform(0.1, 0.3) * min(h, w)
    bits = ((xs - cx) ** 2 + (ys - cy) ** 2) <= r * r
    return bits.reshape(-1).view(np.uint8).copy()


def _time(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench(impl, bufs, repeats):
    a, b = bufs
    n = a.shape[0]
    runs = impl.encode_runs(a)
    acc = np.zeros(n, dtype=np.uint8)
    return {
        "encode_runs": _time(lambda: impl.encode_runs(a), repeats),
        "decode_runs": _time(lambda: impl.decode_runs(runs, n), repeats),
        "count_and": _time(lambda: impl.count_and(a, b), repeats),
        "or_into": _time(lambda: impl.or_into(acc, b), repeats),
    }


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=20)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    for h, w in [(720, 1280), (64, 64)]:
        bufs = (_blob_mask(rng, h, w), _blob_mask(rng, h, w))
        py = bench(_py, bufs, args.repeats)
        print(f"\nmask size {w}x{h} ({w * h} px), best of {args.repeats}")
        header = f"{'op':<14}{'numpy':>12}"
        if _cy is not None:
            header += f"{'cython':>12}{'speedup':>10}"
        print(header)
        cy = bench(_cy, bufs, args.repeats) if _cy is not None else None
        for op in py:
            line = f"{op:<14}{py[op] * 1e6:>10.1f}us"
            if cy is not None:
                line += f"{cy[op] * 1e6:>10.1f}us{py[op] / cy[op]:>9.1f}x"
            print(line)
    if _cy is None:
        print("\ncompiled kernels not built; showing numpy fallback only")


if __name__ == "__main__":
    main()
