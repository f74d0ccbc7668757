"""Mergeable per-region sketch for long aggregated visits.

A Flajolet-Martin level structure where every level holds a small vector of
saturating counters instead of a bit. A user lands on level
``tail(h(user))`` and slot ``g_level(user)``; its time in the region, measured
in units of ``k / r^2``, is added to that counter with saturation at ``r^2``.
Summing the sketches of the query regions and reading the deepest level with
a counter at least ``r^2 - r`` gives a power-of-two estimate; independent
repetitions are combined by their (lower) median.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import kernels
from .errors import CapabilityError, ValidationError
from .model import RegionQuery, TripletStore, to_time

PRIME = 2**31 - 1
REPETITION_CONSTANT = 8
MAGIC = b"CLAVSKT\0"
VERSION = 1


def _exact(x) -> Fraction:
    return Fraction(repr(x)) if isinstance(x, float) else Fraction(x)


@dataclass(frozen=True, eq=False)
class SketchParams:
    n: int
    r: int
    k: Fraction
    epsilon: float
    delta: float
    seed: int
    repetitions: int
    levels: int
    width: int
    h_a: np.ndarray = field(repr=False)
    h_b: np.ndarray = field(repr=False)
    g_a: np.ndarray = field(repr=False)
    g_b: np.ndarray = field(repr=False)

    @property
    def cap(self) -> int:
        return self.r * self.r

    @property
    def threshold(self) -> int:
        return self.r * self.r - self.r

    @property
    def counter_bits(self) -> int:
        return (self.r * self.r).bit_length()

    @property
    def key(self) -> tuple:
        return (self.seed, self.n, self.r, self.k, self.epsilon, self.delta,
                self.repetitions, self.levels, self.width)

    def __eq__(self, other):
        return isinstance(other, SketchParams) and self.key == other.key

    def __hash__(self):
        return hash(self.key)

    def hash_values(self, users) -> np.ndarray:
        """h(user) masked to ``levels`` bits, shape (repetitions, len(users))."""
        users = np.asarray(users, dtype=np.int64)
        full = (self.h_a[:, None] * users[None, :] + self.h_b[:, None]) % PRIME
        return full & ((1 << self.levels) - 1)

    def levels_of(self, users) -> np.ndarray:
        return tail(self.hash_values(users), self.levels)

    def slots_of(self, users, levels) -> np.ndarray:
        users = np.asarray(users, dtype=np.int64)
        reps = np.arange(self.repetitions)[:, None]
        a = self.g_a[reps, levels]
        b = self.g_b[reps, levels]
        return ((a * users[None, :] + b) % PRIME) % self.width


def make_params(n: int, r: int, k, epsilon: float, delta: float, seed: int = 0,
                repetitions: int | None = None) -> SketchParams:
    if n < 1 or n >= PRIME:
        raise ValidationError(f"n must lie in [1, {PRIME}), got {n}")
    if r < 2:
        raise ValidationError(f"r must be at least 2, got {r}")
    k = to_time(k)
    if k <= 0:
        raise ValidationError(f"k must be positive, got {k}")
    if not (0 < epsilon < 1) or not (0 < delta < 1):
        raise ValidationError("need 0 < epsilon < 1 and 0 < delta < 1")
    if repetitions is None:
        repetitions = math.ceil(REPETITION_CONSTANT * math.log(1 / delta))
    if repetitions < 1:
        raise ValidationError(f"repetitions must be positive, got {repetitions}")
    levels = int(n).bit_length()
    width = math.ceil(1 / _exact(epsilon))
    rng = np.random.Generator(np.random.Philox(key=int(seed) & (2**64 - 1)))
    h_a = rng.integers(1, PRIME, size=repetitions, dtype=np.int64)
    h_b = rng.integers(0, PRIME, size=repetitions, dtype=np.int64)
    g_a = rng.integers(1, PRIME, size=(repetitions, levels), dtype=np.int64)
    g_b = rng.integers(0, PRIME, size=(repetitions, levels), dtype=np.int64)
    for arr in (h_a, h_b, g_a, g_b):
        arr.setflags(write=False)
    return SketchParams(int(n), int(r), k, float(epsilon), float(delta), int(seed),
                        int(repetitions), levels, int(width), h_a, h_b, g_a, g_b)


def tail(x, levels: int):
    """Trailing zeros of ``x``; ``tail(0)`` is the deepest level ``levels - 1``.

    Works on ints and on integer arrays.
    """
    if isinstance(x, (int, np.integer)):
        x = int(x)
        if x == 0:
            return levels - 1
        return min((x & -x).bit_length() - 1, levels - 1)
    x = np.asarray(x, dtype=np.int64)
    low = x & -x
    out = np.full(x.shape, levels - 1, dtype=np.int64)
    nz = low > 0
    out[nz] = np.minimum(np.log2(low[nz]).astype(np.int64), levels - 1)
    return out


@dataclass(eq=False)
class RegionSketch:
    params: SketchParams
    counters: np.ndarray  # (repetitions, levels, width) int64

    def __eq__(self, other):
        return (isinstance(other, RegionSketch) and self.params == other.params
                and np.array_equal(self.counters, other.counters))


@dataclass(frozen=True)
class SketchEstimate:
    value: int
    per_repetition: tuple


def empty_sketch(params: SketchParams) -> RegionSketch:
    return RegionSketch(params, np.zeros((params.repetitions, params.levels, params.width), np.int64))


def increments(times_units, scale: int, params: SketchParams) -> np.ndarray:
    """floor(tau * r^2 / k) per user; zero exactly when tau < k / r^2."""
    ks = params.k * scale
    mult = params.cap * ks.denominator
    times_units = np.asarray(times_units, dtype=np.int64)
    if len(times_units) and int(times_units.max()) * mult < 2**63:
        return (times_units * mult) // ks.numerator
    return np.array([int(t) * mult // ks.numerator for t in times_units.tolist()], dtype=np.int64)


def sketch_from_times(users, times_units, scale: int, params: SketchParams) -> RegionSketch:
    """Sketch one region's ``(user, time)`` list, saturating incrementally."""
    sk = empty_sketch(params)
    users = np.asarray(users, dtype=np.int64)
    inc = increments(times_units, scale, params)
    keep = inc > 0
    users, inc = users[keep], np.minimum(inc[keep], params.cap)
    if not len(users):
        return sk
    lv = params.levels_of(users)
    slots = params.slots_of(users, lv)
    base = (np.arange(params.repetitions)[:, None] * params.levels + lv) * params.width
    # user-major order: each user's repetitions are applied as in a single pass
    index = np.ascontiguousarray((base + slots).T.reshape(-1))
    steps = np.ascontiguousarray(np.repeat(inc, params.repetitions))
    kernels.saturating_accumulate(sk.counters, index, steps, params.cap)
    return sk


def sketch_region(store: TripletStore, j: int, params: SketchParams) -> RegionSketch:
    if not (0 <= j < store.m):
        raise ValidationError(f"unknown region id {j}")
    users, times = store.region(j)
    return sketch_from_times(users, times, store.scale, params)


def build_sketches(store: TripletStore, params: SketchParams) -> dict:
    """Sketch of every region, keyed by region id."""
    return {j: sketch_region(store, j, params) for j in range(store.m)}


def merge_sketches(sketches) -> RegionSketch:
    """Entrywise sum, saturated once at the end (order independent)."""
    sketches = list(sketches)
    if not sketches:
        raise ValidationError("nothing to merge")
    params = sketches[0].params
    if any(s.params != params for s in sketches[1:]):
        raise ValidationError("cannot merge sketches built with different parameters")
    total = np.zeros_like(sketches[0].counters)
    for s in sketches:
        total += s.counters
    np.minimum(total, params.cap, out=total)
    return RegionSketch(params, total)


def level_estimates(merged: RegionSketch) -> list[int]:
    """Per repetition: 2^l for the deepest level holding a counter >= r^2 - r, else 0."""
    params = merged.params
    hit = merged.counters.max(axis=2) >= params.threshold  # (reps, levels)
    out = []
    for row in hit:
        idx = np.flatnonzero(row)
        out.append(1 << int(idx[-1]) if len(idx) else 0)
    return out


def sketch_query(sketches, params: SketchParams) -> SketchEstimate:
    sketches = list(sketches)
    if len(sketches) > params.r:
        raise CapabilityError(f"query has {len(sketches)} regions but the sketch supports r={params.r}")
    if not sketches:
        raise ValidationError("query must name at least one region")
    if any(s.params != params for s in sketches):
        raise ValidationError("sketch parameters do not match")
    per = level_estimates(merge_sketches(sketches))
    ordered = sorted(per)
    return SketchEstimate(ordered[(len(ordered) - 1) // 2], tuple(per))


def query_sketches(sketch_set: dict, q: RegionQuery, params: SketchParams) -> SketchEstimate:
    """Estimate for a region query against ``build_sketches`` output."""
    if q.k != params.k:
        raise ValidationError(f"sketches were built for k={params.k}, query asks k={q.k}")
    missing = [j for j in q.regions if j not in sketch_set]
    if missing:
        raise ValidationError(f"unknown region id(s) {missing}")
    return sketch_query([sketch_set[j] for j in q.regions], params)


def sketch_size_bits(params: SketchParams) -> int:
    """Bits per region sketch."""
    return params.repetitions * params.levels * params.width * params.counter_bits


# --------------------------------------------------------------------------
# Snapshot format
#
#   header  magic(8) version:u32 seed:u64 n:u64 r:u32 k_num:u64 k_den:u64
#           epsilon:f64 R:u32 L:u32 W:u32 delta:f64
#   body    count:u64, then per region: id:i64 and the R*L*W counters
#           bit-packed little-endian at ceil(log2(r^2+1)) bits each
#
# Two files are mergeable iff their headers are byte-identical.
# --------------------------------------------------------------------------

_HEADER = "<IQQIQQdIIId"


def header_bytes(params: SketchParams) -> bytes:
    if params.k.numerator >= 2**64 or params.k.denominator >= 2**64:
        raise ValidationError("k too large to serialise")
    return MAGIC + struct.pack(_HEADER, VERSION, params.seed & (2**64 - 1), params.n, params.r,
                               params.k.numerator, params.k.denominator, params.epsilon,
                               params.repetitions, params.levels, params.width, params.delta)


def pack_counters(values, bits: int) -> bytes:
    v = np.asarray(values, dtype=np.uint64).reshape(-1)
    bitmat = ((v[:, None] >> np.arange(bits, dtype=np.uint64)) & 1).astype(np.uint8)
    return np.packbits(bitmat.reshape(-1), bitorder="little").tobytes()


def unpack_counters(data: bytes, count: int, bits: int) -> np.ndarray:
    raw = np.frombuffer(data, dtype=np.uint8)
    flat = np.unpackbits(raw, count=count * bits, bitorder="little").reshape(count, bits)
    return (flat.astype(np.int64) << np.arange(bits, dtype=np.int64)).sum(axis=1)


def dumps(sketch_set: dict, params: SketchParams) -> bytes:
    out = [header_bytes(params), struct.pack("<Q", len(sketch_set))]
    for j in sorted(sketch_set):
        out.append(struct.pack("<q", j))
        out.append(pack_counters(sketch_set[j].counters, params.counter_bits))
    return b"".join(out)


def loads(data: bytes):
    """Return ``(sketch_set, params)`` from :func:`dumps` output."""
    try:
        return _loads(data)
    except struct.error as exc:
        raise ValidationError(f"truncated sketch snapshot: {exc}") from None


def _loads(data: bytes):
    if data[:8] != MAGIC:
        raise ValidationError("not a sketch snapshot")
    pos = 8
    (version, seed, n, r, k_num, k_den, eps, reps, levels, width, delta) = struct.unpack_from(_HEADER, data, pos)
    if version != VERSION:
        raise ValidationError(f"unsupported sketch version {version}")
    pos += struct.calcsize(_HEADER)
    params = make_params(n, r, Fraction(k_num, k_den), eps, delta, seed, repetitions=reps)
    if (params.levels, params.width) != (levels, width):
        raise ValidationError("inconsistent sketch header")
    (count,) = struct.unpack_from("<Q", data, pos)
    pos += 8
    cells = reps * levels * width
    nbytes = (cells * params.counter_bits + 7) // 8
    sketch_set = {}
    for _ in range(count):
        (j,) = struct.unpack_from("<q", data, pos)
        pos += 8
        if pos + nbytes > len(data):
            raise ValidationError("truncated sketch snapshot")
        counters = unpack_counters(data[pos:pos + nbytes], cells, params.counter_bits)
        pos += nbytes
        sketch_set[j] = RegionSketch(params, counters.reshape(reps, levels, width))
    if pos != len(data):
        raise ValidationError("trailing bytes in sketch snapshot")
    return sketch_set, params


def save_sketches(sketch_set: dict, params: SketchParams, path) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps(sketch_set, params))


def load_sketches(paths):
    """Load one or more snapshot files; per-region sketches of matching files are merged."""
    combined: dict = {}
    params = None
    header = None
    for path in paths:
        with open(path, "rb") as fh:
            data = fh.read()
        sketch_set, p = loads(data)
        if header is None:
            header, params = header_bytes(p), p
        elif header_bytes(p) != header:
            raise ValidationError(f"{path}: sketch header does not match; files are not mergeable")
        for j, sk in sketch_set.items():
            combined[j] = merge_sketches([combined[j], sk]) if j in combined else sk
    return combined, params
