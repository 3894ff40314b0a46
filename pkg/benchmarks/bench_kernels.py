"""Compare the compiled kernels with the numpy fallback.

    python3 benchmarks/bench_kernels.py [--n 20000] [--repeat 7]

Prints the median wall time per call for each kernel and backend, plus the
speed-up of the compiled backend when it is available.
"""

import argparse
import math
import statistics
import time

import numpy as np

from gnssmap import _backend
from gnssmap.geo import Footprint


def _median_time(fn, repeat):
    fn()  # warm-up
    samples = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples)


def _workloads(n, seed):
    rng = np.random.default_rng(seed)
    ring = Footprint([(-6.0, 0.0), (6.0, 0.0), (8.0, 7.0), (0.0, 12.0), (-8.0, 7.0)]).xy
    ang = rng.uniform(0.0, 2 * math.pi, n)
    ox, oy = 30.0 * np.cos(ang), 30.0 * np.sin(ang)
    az = np.radians(np.degrees(np.arctan2(-ox, -oy)) + rng.uniform(-30.0, 30.0, n))
    dx, dy = np.sin(az), np.cos(az)

    x = rng.uniform(10.0, 50.0, n)
    y = (rng.random(n) < 0.1 + 0.8 / (1.0 + np.exp(-0.2 * (x - 30.0)))).astype(np.int8)

    return {
        "ray_entry_batch": lambda k: k.ray_entry_batch(ox, oy, dx, dy, ring),
        "loglik_grad": lambda k: k.loglik_grad(0.9, 0.2, 30.0, 0.1, y, x, True),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=20_000, help="rays / tuples per call")
    ap.add_argument("--repeat", type=int, default=7)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    names = _backend.available()
    work = _workloads(args.n, args.seed)
    print(f"n = {args.n}, backends: {', '.join(names)}")
    print(f"{'kernel':<18}" + "".join(f"{n:>14}" for n in names) + ("     speed-up" if len(names) > 1 else ""))
    for kernel, call in work.items():
        times = {n: _median_time(lambda: call(_backend.get(n)), args.repeat) for n in names}
        row = f"{kernel:<18}" + "".join(f"{times[n] * 1e3:>11.3f} ms" for n in names)
        if "compiled" in times:
            row += f"{times['python'] / times['compiled']:>12.1f}x"
        print(row)


if __name__ == "__main__":
    main()
