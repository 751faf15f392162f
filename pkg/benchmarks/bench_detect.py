"""Compare the numba and pure-numpy backends of the hot vision kernels.

Times the rotated integral image and the raw multiscale scan (cascade
evaluation over every window) on synthetic frames, checks that both backends
return identical results, and prints a small table.

    python3 benchmarks/bench_detect.py --width 320 --height 240 --repeats 5
"""

import argparse
import statistics
import time

import numpy as np

from laughfuse._accel import HAVE_NUMBA
from laughfuse.corpus import noise_frame, stamp_pattern
from laughfuse.vision.cascade import parse_cascade_xml, toy_cascade_path
from laughfuse.vision.detect import DetectionParams, detect_raw
from laughfuse.vision.integral import integral_image


def best_of(fn, repeats):
    times = []
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), statistics.median(times), out


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--width", type=int, default=320)
    p.add_argument("--height", type=int, default=240)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)

    if not HAVE_NUMBA:
        print("numba unavailable or disabled (LAUGHFUSE_DISABLE_NUMBA); nothing to compare")
        return 1

    rng = np.random.default_rng(args.seed)
    img = noise_frame(rng, args.width, args.height)
    for _ in range(3):
        x, y = rng.integers(0, args.width - 24), rng.integers(0, args.height - 24)
        img = stamp_pattern(img, int(x), int(y), rng)
    cascade = parse_cascade_xml(toy_cascade_path())
    params = DetectionParams(min_neighbors=0)

    # warm-up compiles the numba kernels outside the timed region
    integral_image(img[:32, :32], with_rotated=True, backend="numba")
    detect_raw(cascade, img[:48, :48], params, backend="numba")

    cases = [
        ("rotated integral image", lambda b: integral_image(img, with_rotated=True, backend=b).tilted),
        ("raw multiscale scan", lambda b: detect_raw(cascade, img, params, backend=b)),
    ]
    print(f"frame {args.width}x{args.height}, best/median of {args.repeats}")
    print(f"{'kernel':<24}{'numpy ms':>16}{'numba ms':>16}{'speedup':>9}  equal")
    for name, fn in cases:
        np_best, np_med, np_out = best_of(lambda: fn("numpy"), args.repeats)
        nb_best, nb_med, nb_out = best_of(lambda: fn("numba"), args.repeats)
        equal = np.array_equal(np_out, nb_out) if isinstance(np_out, np.ndarray) else np_out == nb_out
        np_ms = f"{1e3 * np_best:.1f} / {1e3 * np_med:.1f}"
        nb_ms = f"{1e3 * nb_best:.1f} / {1e3 * nb_med:.1f}"
        print(f"{name:<24}{np_ms:>16}{nb_ms:>16}{np_best / nb_best:>8.1f}x  {equal}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
