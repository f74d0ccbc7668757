"""Time every kernel under the compiled and the pure-Python backend.

    python benchmarks/bench_kernels.py [--size 20000] [--repeat 5]

Prints one key=value line per (kernel, backend) with the best wall time and
the speedup over the pure-Python backend; outputs are checked for equality.
"""

import argparse
import time

import numpy as np

from clav import kernels
from clav.geometric import DominanceCounter


def cases(size, seed=0):
    rng = np.random.default_rng(seed)
    users = np.sort(rng.integers(0, size, size))
    times = rng.integers(1, 50, size)
    lu = np.unique(rng.integers(0, size, size))
    lt = rng.integers(1, 100, len(lu))
    yield "small_region_count", (users, times, lu, lt, 80)

    m = 16
    keys = np.unique(rng.integers(0, size * m, 4 * size))
    ktimes = rng.integers(1, 50, len(keys))
    pick = rng.integers(0, len(keys), size)
    su, sr = keys[pick] // m, keys[pick] % m
    q = np.arange(m, dtype=np.int64)[::4].copy()
    mask = np.isin(sr, q)
    yield "sample_hits", (su[mask].copy(), sr[mask].copy(), ktimes[pick][mask].copy(), q, keys, ktimes, m, 60)

    counters = np.zeros(4096, dtype=np.int64)
    idx = rng.integers(0, 4096, size)
    inc = rng.integers(0, 5, size)
    yield "saturating_accumulate", (counters, idx, inc, 16)

    groups = np.sort(rng.integers(0, size // 20 + 1, size))
    pos = np.zeros(size, dtype=np.int64)
    starts = np.r_[0, np.flatnonzero(np.diff(groups)) + 1]
    for a, b in zip(starts, np.r_[starts[1:], size]):
        pos[a:b] = np.sort(rng.choice(10 * size, b - a, replace=False))
    yield "minimal_intervals", (groups, pos, rng.integers(1, 10, size), 25)

    pts = np.stack([rng.integers(0, 4, size), rng.integers(0, size, size), rng.integers(0, size, size)])
    order = np.lexsort(pts[::-1])
    c, x, y = (np.ascontiguousarray(row[order]) for row in pts)
    yield "staircase", (c, x, y)

    dc = DominanceCounter(rng.integers(0, size, size), rng.integers(0, size, size), rng.integers(-1, 2, size))
    qx, qy = rng.integers(0, size, 2000), rng.integers(0, size, 2000)
    yield "dominance_query", (dc.xs_sorted, dc.node_ptr, dc.node_y, dc.node_cw, qx, qy)


def best_of(fn, args, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        fresh = tuple(a.copy() if isinstance(a, np.ndarray) else a for a in args)
        t0 = time.perf_counter()
        out = fn(*fresh)
        best = min(best, time.perf_counter() - t0)
    return best, out


def same(a, b):
    if isinstance(a, tuple):
        return all(np.array_equal(x, y) for x, y in zip(a, b))
    return np.array_equal(np.asarray(a), np.asarray(b))


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--size", type=int, default=20000)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    backends = sorted(kernels.BACKENDS)
    for name, call_args in cases(args.size):
        base = None
        outputs = []
        for backend in ["python"] + [b for b in backends if b != "python"]:
            seconds, out = best_of(getattr(kernels.BACKENDS[backend], name), call_args, args.repeat)
            outputs.append(out)
            base = base or seconds
            print(f"kernel={name} backend={backend} size={args.size} seconds={seconds:.6f} "
                  f"speedup={base / seconds:.1f}")
        if name == "saturating_accumulate":
            continue  # mutates in place; equality is covered by the tests
        if not all(same(outputs[0], o) for o in outputs[1:]):
            raise SystemExit(f"backends disagree on {name}")


if __name__ == "__main__":
    main()
