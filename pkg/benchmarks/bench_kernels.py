"""Time the compiled nearest-point kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--size 200000] [--repeat 5]

Both backends are checked for identical output before timing.
"""

import argparse
import sys
import timeit

import numpy as np

from wzlvq import _kernels_py
from wzlvq.lattice import make_lattice

try:
    from wzlvq import _kernels as _ext
except ImportError:
    _ext = None


def cases(size, rng):
    for name in ("A2", "A2 x 0.01"):
        L = make_lattice("A2").scale(0.01 if "0.01" in name else 1.0)
        x = np.ascontiguousarray(rng.uniform(-10, 10, (size, 2)) * L.basis[0, 0])
        args = (x, np.ascontiguousarray(L.basis), np.ascontiguousarray(L.inverse), L._offsets, L._tie_tol)
        yield f"nearest_box {name}", "nearest_box", args
    for k in (16, 256):
        cb = np.ascontiguousarray(np.sort(rng.normal(size=(k, 1)), axis=0))
        x = np.ascontiguousarray(rng.normal(size=(size, 1)))
        yield f"nearest_codebook 1-D k={k}", "nearest_codebook", (x, cb)
    cb = np.ascontiguousarray(rng.normal(size=(63, 2)))
    x = np.ascontiguousarray(rng.normal(size=(size, 2)))
    yield "nearest_codebook 2-D k=63", "nearest_codebook", (x, cb)


def main(argv=None):
    p = argparse.ArgumentParser()
    p.add_argument("--size", type=int, default=200_000)
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)
    if _ext is None:
        print("compiled extension not built; only the numpy backend is available", file=sys.stderr)
        return 1
    rng = np.random.default_rng(0)
    print(f"{'kernel':32s} {'cython ms':>10s} {'python ms':>10s} {'speedup':>8s}")
    for label, fn, a in cases(args.size, rng):
        fast, slow = getattr(_ext, fn), getattr(_kernels_py, fn)
        if not np.array_equal(fast(*a), slow(*a)):
            raise SystemExit(f"{label}: backends disagree")
        tf = min(timeit.repeat(lambda: fast(*a), number=1, repeat=args.repeat))
        ts = min(timeit.repeat(lambda: slow(*a), number=1, repeat=args.repeat))
        print(f"{label:32s} {tf * 1e3:10.2f} {ts * 1e3:10.2f} {ts / tf:8.1f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
