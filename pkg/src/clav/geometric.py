"""Exact structures for box queries over users' time at points in R^d.

* Tabulation: after rank-space reduction every box is one of at most
  ``prod(m_i^2)`` combinatorially distinct boxes, so store all answers.
* 1D: a user qualifies in ``[a, b]`` iff one of its *minimal intervals* lies
  inside ``[a, b]``. Mapping ``[l, r]`` to ``(-l, r)`` turns containment into
  dominance, and counting distinct users becomes colored dominance counting,
  answered here with a per-color staircase of +1 points and -1 corners over a
  static weighted dominance counter.
* d dims: one 1D structure per choice of box boundaries in dims 2..d.
* Any k: copies at ``k' = 2^i`` answer at the largest power of two <= k.
"""

from __future__ import annotations

import itertools
import struct
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import kernels
from .budget import budget
from .errors import ResourceError, ValidationError
from .model import GeoDataset, RectQuery, as_geo_dataset, to_time, units_for

MAGIC = b"CLAVGEO\0"
VERSION = 1
TAG_1D, TAG_DD, TAG_TAB, TAG_MULTI = 1, 2, 3, 4


# --------------------------------------------------------------------------
# Rank space
# --------------------------------------------------------------------------


class RankMap:
    """Sorted distinct coordinates per dimension; rank ``i`` (1-based) is ``coords[dim][i-1]``."""

    def __init__(self, coords):
        self.coords = [np.ascontiguousarray(c, dtype=np.float64) for c in coords]

    @property
    def d(self) -> int:
        return len(self.coords)

    @property
    def sizes(self) -> tuple:
        return tuple(len(c) for c in self.coords)

    def snap(self, lo, hi):
        """Rank box ``((a1, b1), ...)`` covering the same data points, or None if empty."""
        if len(lo) != self.d or len(hi) != self.d:
            raise ValidationError(f"query dimension {len(lo)} does not match data dimension {self.d}")
        out = []
        for c, a, b in zip(self.coords, lo, hi):
            ra = int(np.searchsorted(c, a, side="left")) + 1
            rb = int(np.searchsorted(c, b, side="right"))
            if ra > rb:
                return None
            out.append((ra, rb))
        return tuple(out)

    def __eq__(self, other):
        return isinstance(other, RankMap) and self.d == other.d and all(
            np.array_equal(a, b) for a, b in zip(self.coords, other.coords))


def rank_reduce(dataset):
    """Replace every coordinate by its 1-based rank. Returns ``(ranks, RankMap)``."""
    ds = as_geo_dataset(dataset)
    coords = [np.unique(ds.coords[:, i]) for i in range(ds.d)]
    ranks = np.empty((ds.N, ds.d), dtype=np.int64)
    for i, c in enumerate(coords):
        ranks[:, i] = np.searchsorted(c, ds.coords[:, i]) + 1
    return ranks, RankMap(coords)


def _bounds(rect):
    if isinstance(rect, RectQuery):
        return rect.lo, rect.hi
    lo, hi = rect
    lo = tuple(np.atleast_1d(np.asarray(lo, dtype=np.float64)).tolist())
    hi = tuple(np.atleast_1d(np.asarray(hi, dtype=np.float64)).tolist())
    if any(a > b for a, b in zip(lo, hi)):
        raise ValidationError(f"box has lo > hi: {lo} {hi}")
    return lo, hi


def snap_query(rect, rank_map: RankMap):
    lo, hi = _bounds(rect)
    return rank_map.snap(lo, hi)


# --------------------------------------------------------------------------
# Minimal intervals and the staircase reduction
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class MinimalInterval:
    user: int
    l: int
    r: int


@dataclass(frozen=True)
class ColoredPoint:
    x: int
    y: int
    color: int
    weight: int


def minimal_intervals(positions, times, k, user: int = 0) -> list[MinimalInterval]:
    """Inclusion-minimal intervals ``[l, r]`` holding at least ``k`` of one user's time.

    ``positions`` strictly increasing integers, ``times`` positive integers,
    ``k`` a positive integer in the same units.
    """
    pos = np.ascontiguousarray(positions, dtype=np.int64)
    t = np.ascontiguousarray(times, dtype=np.int64)
    if len(pos) != len(t):
        raise ValidationError("positions and times differ in length")
    if len(pos) > 1 and np.any(np.diff(pos) <= 0):
        raise ValidationError("positions must be strictly increasing")
    if np.any(t <= 0):
        raise ValidationError("times must be positive")
    users = np.full(len(pos), user, dtype=np.int64)
    us, ls, rs = kernels.minimal_intervals(users, pos, t, int(k))
    return [MinimalInterval(int(u), int(a), int(b)) for u, a, b in zip(us, ls, rs)]


def staircase_reduce(points, color: int = 0) -> list[ColoredPoint]:
    """Keep the dominance-minimal points (+1) and add a -1 corner between neighbours.

    For any query the signed weight dominated is then 1 if some input point is
    dominated and 0 otherwise.
    """
    pts = np.asarray(list(points), dtype=np.int64).reshape(-1, 2)
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    xs = np.ascontiguousarray(pts[order, 0])
    ys = np.ascontiguousarray(pts[order, 1])
    colors = np.full(len(xs), color, dtype=np.int64)
    cs, ox, oy, ow = kernels.staircase(colors, xs, ys)
    return [ColoredPoint(int(x), int(y), int(c), int(w)) for c, x, y, w in zip(cs, ox, oy, ow)]


class DominanceCounter:
    """Static signed-weight dominance sums over integer points.

    Points are sorted by x and organised as a Fenwick tree whose nodes keep
    their y values sorted with prefix weights: O(P log P) space and
    O(log^2 P) per query.
    """

    def __init__(self, xs, ys, weights):
        xs = np.asarray(xs, dtype=np.int64)
        ys = np.asarray(ys, dtype=np.int64)
        ws = np.asarray(weights, dtype=np.int64)
        order = np.argsort(xs, kind="stable")
        self.xs_sorted = np.ascontiguousarray(xs[order])
        ys_s, ws_s = ys[order], ws[order]
        size = len(xs)
        ids = np.arange(1, size + 1, dtype=np.int64)
        lens = ids & -ids
        self.node_ptr = np.zeros(size + 1, dtype=np.int64)
        np.cumsum(lens, out=self.node_ptr[1:])
        total = int(self.node_ptr[-1])
        node_of = np.repeat(np.arange(size, dtype=np.int64), lens)
        elem = (ids - lens)[node_of] + (np.arange(total, dtype=np.int64) - self.node_ptr[node_of])
        ny = ys_s[elem]
        nw = ws_s[elem]
        order = np.lexsort((ny, node_of))
        self.node_y = np.ascontiguousarray(ny[order])
        cw = np.cumsum(nw[order])
        before = np.r_[0, cw][self.node_ptr[:-1]]
        self.node_cw = np.ascontiguousarray(cw - np.repeat(before, lens))

    @classmethod
    def from_arrays(cls, xs_sorted, node_ptr, node_y, node_cw):
        obj = cls.__new__(cls)
        obj.xs_sorted, obj.node_ptr, obj.node_y, obj.node_cw = xs_sorted, node_ptr, node_y, node_cw
        return obj

    def __len__(self):
        return len(self.xs_sorted)

    def query_many(self, qx, qy) -> np.ndarray:
        qx = np.ascontiguousarray(qx, dtype=np.int64)
        qy = np.ascontiguousarray(qy, dtype=np.int64)
        return kernels.dominance_query(self.xs_sorted, self.node_ptr, self.node_y, self.node_cw, qx, qy)

    def query(self, qx: int, qy: int) -> int:
        return int(self.query_many([qx], [qy])[0])


def dominance_sum(counter: DominanceCounter, q) -> int:
    return counter.query(int(q[0]), int(q[1]))


# --------------------------------------------------------------------------
# 1D structure
# --------------------------------------------------------------------------


@dataclass
class LineIndex:
    """Rank-space 1D core: interval ``[a, b]`` answers ``counter(-a, b)``."""

    counter: DominanceCounter
    intervals: int
    triplets: int

    def count(self, a: int, b: int) -> int:
        return self.counter.query(-a, b)


def _group_sum(keys_a, keys_b, times):
    order = np.lexsort((keys_b, keys_a))
    a, b, t = keys_a[order], keys_b[order], times[order]
    if not len(a):
        return a, b, t
    starts = np.flatnonzero(np.r_[True, (a[1:] != a[:-1]) | (b[1:] != b[:-1])])
    return a[starts], b[starts], np.add.reduceat(t, starts)


def build_line(users, positions, times, k_units: int) -> LineIndex:
    """1D core over integer positions; same-position visits of a user are summed first."""
    users, pos, t = _group_sum(np.asarray(users, dtype=np.int64),
                               np.asarray(positions, dtype=np.int64),
                               np.asarray(times, dtype=np.int64))
    us, ls, rs = kernels.minimal_intervals(np.ascontiguousarray(users), np.ascontiguousarray(pos),
                                           np.ascontiguousarray(t), int(k_units))
    assert len(us) <= len(users), "more minimal intervals than triplets"
    xs, ys = -ls, rs
    order = np.lexsort((ys, xs, us))
    cs, ox, oy, ow = kernels.staircase(np.ascontiguousarray(us[order]), np.ascontiguousarray(xs[order]),
                                       np.ascontiguousarray(ys[order]))
    return LineIndex(DominanceCounter(ox, oy, ow), len(us), len(users))


@dataclass
class GeoIndex1D:
    rank_map: RankMap
    line: LineIndex
    k: Fraction
    scale: int

    @property
    def intervals(self) -> int:
        return self.line.intervals


def _check_k(index_k, rect):
    if isinstance(rect, RectQuery) and rect.k != index_k:
        raise ValidationError(f"index was built for k={index_k}, query asks k={rect.k}")


def build_1d(dataset, k) -> GeoIndex1D:
    ds = as_geo_dataset(dataset, 1)
    if ds.d != 1:
        raise ValidationError(f"build_1d needs d=1 data, got d={ds.d}")
    k = to_time(k)
    ranks, rmap = rank_reduce(ds)
    line = build_line(ds.users, ranks[:, 0], ds.times, ds.k_units(k))
    return GeoIndex1D(rmap, line, k, ds.scale)


def query_1d(index: GeoIndex1D, interval) -> int:
    _check_k(index.k, interval)
    box = snap_query(interval, index.rank_map)
    if box is None:
        return 0
    (a, b), = box
    return index.line.count(a, b)


# --------------------------------------------------------------------------
# d-dimensional structure
# --------------------------------------------------------------------------


def _pairs(size: int):
    return [(a, b) for a in range(1, size + 1) for b in range(a, size + 1)]


@dataclass
class GeoIndexD:
    rank_map: RankMap
    slabs: dict
    k: Fraction
    scale: int

    @property
    def d(self) -> int:
        return self.rank_map.d

    @property
    def intervals(self) -> int:
        return sum(s.intervals for s in self.slabs.values())


def build_dd(dataset, d: int, k, max_structures: int | None = None) -> GeoIndexD:
    """One 1D structure per slab choice ``(lo_i, hi_i)`` for dims 2..d."""
    ds = as_geo_dataset(dataset, d)
    if ds.d != d:
        raise ValidationError(f"data has dimension {ds.d}, expected {d}")
    if d < 2:
        raise ValidationError("build_dd needs d >= 2; use build_1d")
    k = to_time(k)
    ranks, rmap = rank_reduce(ds)
    sizes = rmap.sizes
    count = 1
    for size in sizes[1:]:
        count *= size * (size + 1) // 2
    limit = budget("structures", max_structures)
    if count > limit:
        raise ResourceError("slab structures", count, limit)
    k_units = ds.k_units(k)
    slabs = {}
    for key in itertools.product(*(_pairs(s) for s in sizes[1:])):
        mask = np.ones(ds.N, dtype=bool)
        for dim, (a, b) in enumerate(key, start=1):
            col = ranks[:, dim]
            mask &= (col >= a) & (col <= b)
        slabs[key] = build_line(ds.users[mask], ranks[mask, 0], ds.times[mask], k_units)
    return GeoIndexD(rmap, slabs, k, ds.scale)


def query_dd(index: GeoIndexD, rect) -> int:
    _check_k(index.k, rect)
    box = snap_query(rect, index.rank_map)
    if box is None:
        return 0
    (a, b) = box[0]
    return index.slabs[tuple(box[1:])].count(a, b)


# --------------------------------------------------------------------------
# Tabulation
# --------------------------------------------------------------------------


@dataclass
class TabulationIndex:
    """Dense answers indexed ``[lo_1 - 1, hi_1 - 1, ..., lo_d - 1, hi_d - 1]`` in rank space."""

    rank_map: RankMap
    table: np.ndarray
    k: Fraction
    scale: int


def _interval_sums(grid, axis: int):
    """Replace ``axis`` of size m by two axes (lo, hi) holding sums over [lo, hi]."""
    pad = [(0, 0)] * grid.ndim
    pad[axis] = (1, 0)
    prefix = np.pad(np.cumsum(grid, axis=axis), pad)
    hi = np.take(prefix, np.arange(1, grid.shape[axis] + 1), axis=axis)
    lo = np.take(prefix, np.arange(0, grid.shape[axis]), axis=axis)
    return np.expand_dims(hi, axis) - np.expand_dims(lo, axis + 1)


def build_tabulation(dataset, k, max_entries: int | None = None, d: int | None = None) -> TabulationIndex:
    ds = as_geo_dataset(dataset, d)
    k = to_time(k)
    ranks, rmap = rank_reduce(ds)
    sizes = rmap.sizes
    entries = 1
    for size in sizes:
        entries *= size * size
    limit = budget("entries", max_entries)
    if entries > limit:
        raise ResourceError("tabulation entries", entries, limit)
    shape = tuple(x for size in sizes for x in (size, size))
    table = np.zeros(shape, dtype=np.int64)
    k_units = ds.k_units(k)
    if ds.N:
        totals: dict = {}
        for u, t in zip(ds.users.tolist(), ds.times.tolist()):
            totals[u] = totals.get(u, 0) + t
        live = np.array(sorted(u for u, t in totals.items() if t >= k_units), dtype=np.int64)
        cells = int(np.prod(sizes))
        chunk = max(1, int(4 * 10**6 // max(entries, 1)))
        for start in range(0, len(live), chunk):
            group = live[start:start + chunk]
            sel = np.isin(ds.users, group)
            row = np.searchsorted(group, ds.users[sel])
            grid = np.zeros((len(group), cells), dtype=np.int64)
            flat = np.ravel_multi_index(tuple((ranks[sel] - 1).T), sizes) if ds.d else 0
            np.add.at(grid, (row, flat), ds.times[sel])
            grid = grid.reshape((len(group),) + sizes)
            for axis in range(ds.d):
                grid = _interval_sums(grid, 1 + 2 * axis)
            table += np.count_nonzero(grid >= k_units, axis=0)
    return TabulationIndex(rmap, table, k, ds.scale)


def query_tabulation(index: TabulationIndex, rect) -> int:
    _check_k(index.k, rect)
    box = snap_query(rect, index.rank_map)
    if box is None:
        return 0
    return int(index.table[tuple(r - 1 for pair in box for r in pair)])


# --------------------------------------------------------------------------
# Powers-of-two thresholds
# --------------------------------------------------------------------------


@dataclass
class MultiKIndex:
    K: Fraction
    copies: list  # copies[i - 1] answers threshold 2^i

    @property
    def d(self) -> int:
        return self.copies[0].rank_map.d


def _floor_log2(k: Fraction) -> int:
    return (k.numerator // k.denominator).bit_length() - 1


def _ceil_log2(k: Fraction) -> int:
    i = _floor_log2(k)
    return i if Fraction(2**i) == k else i + 1


def build_multi_k(dataset, d: int, K, max_structures: int | None = None) -> MultiKIndex:
    K = to_time(K)
    if K < 2:
        raise ValidationError(f"K must be at least 2, got {K}")
    ds = as_geo_dataset(dataset, d)
    copies = []
    for i in range(1, _ceil_log2(K) + 1):
        if d == 1:
            copies.append(build_1d(ds, 2**i))
        else:
            copies.append(build_dd(ds, d, 2**i, max_structures))
    return MultiKIndex(K, copies)


def query_multi_k(index: MultiKIndex, rect, k) -> int:
    """Answer at threshold ``2^floor(log2 k)``: between the counts at k and at k/2."""
    k = to_time(k)
    if not (2 <= k <= index.K):
        raise ValidationError(f"k must lie in [2, {index.K}], got {k}")
    copy = index.copies[_floor_log2(k) - 1]
    lo, hi = _bounds(rect)
    if isinstance(copy, GeoIndex1D):
        return query_1d(copy, (lo, hi))
    return query_dd(copy, (lo, hi))


# --------------------------------------------------------------------------
# Snapshots
#
#   header   magic(8) version:u32 tag:u32 d:u32 k_num:u64 k_den:u64 scale:u64
#   ranks    per dim: count:u64, f64[count]
#   payload  1D:    line
#            dD:    count:u64, per slab: key i64[2(d-1)], line
#            tab:   i64 table in C order (shape from the rank map)
#            multi: count:u64, per copy: length:u64, nested snapshot
#   line     P:u64 intervals:u64 triplets:u64 xs i64[P] ptr i64[P+1]
#            T:u64 node_y i64[T] node_cw i64[T]
# --------------------------------------------------------------------------


def _i64(a) -> bytes:
    return np.ascontiguousarray(a, dtype="<i8").tobytes()


def _header(tag, d, k: Fraction, scale) -> bytes:
    return MAGIC + struct.pack("<IIIQQQ", VERSION, tag, d, k.numerator, k.denominator, scale)


def _rank_bytes(rmap: RankMap) -> bytes:
    out = []
    for c in rmap.coords:
        out.append(struct.pack("<Q", len(c)))
        out.append(np.ascontiguousarray(c, dtype="<f8").tobytes())
    return b"".join(out)


def _line_bytes(line: LineIndex) -> bytes:
    c = line.counter
    return b"".join([
        struct.pack("<QQQ", len(c.xs_sorted), line.intervals, line.triplets),
        _i64(c.xs_sorted), _i64(c.node_ptr),
        struct.pack("<Q", len(c.node_y)), _i64(c.node_y), _i64(c.node_cw),
    ])


def dumps(index) -> bytes:
    if isinstance(index, MultiKIndex):
        parts = [dumps(c) for c in index.copies]
        out = [_header(TAG_MULTI, index.d, index.K, 1), struct.pack("<Q", len(parts))]
        for p in parts:
            out.append(struct.pack("<Q", len(p)))
            out.append(p)
        return b"".join(out)
    if isinstance(index, GeoIndex1D):
        tag = TAG_1D
    elif isinstance(index, GeoIndexD):
        tag = TAG_DD
    elif isinstance(index, TabulationIndex):
        tag = TAG_TAB
    else:
        raise ValidationError(f"cannot serialise {type(index).__name__}")
    out = [_header(tag, index.rank_map.d, index.k, index.scale), _rank_bytes(index.rank_map)]
    if tag == TAG_1D:
        out.append(_line_bytes(index.line))
    elif tag == TAG_DD:
        out.append(struct.pack("<Q", len(index.slabs)))
        for key in sorted(index.slabs):
            out.append(_i64([x for pair in key for x in pair]))
            out.append(_line_bytes(index.slabs[key]))
    else:
        out.append(_i64(index.table.reshape(-1)))
    return b"".join(out)


class _Reader:
    def __init__(self, data: bytes, pos: int = 0):
        self.data, self.pos = data, pos

    def unpack(self, fmt):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.data):
            raise ValidationError("truncated geometric snapshot")
        vals = struct.unpack_from(fmt, self.data, self.pos)
        self.pos += size
        return vals

    def array(self, count, dtype="<i8"):
        size = 8 * count
        if self.pos + size > len(self.data):
            raise ValidationError("truncated geometric snapshot")
        arr = np.frombuffer(self.data, dtype=dtype, count=count, offset=self.pos)
        self.pos += size
        return arr.astype(np.int64 if dtype == "<i8" else np.float64)

    def bytes(self, count):
        chunk = self.data[self.pos:self.pos + count]
        self.pos += count
        return chunk


def _read_line(rd: _Reader) -> LineIndex:
    size, intervals, triplets = rd.unpack("<QQQ")
    xs = rd.array(size)
    ptr = rd.array(size + 1)
    (total,) = rd.unpack("<Q")
    ny = rd.array(total)
    cw = rd.array(total)
    return LineIndex(DominanceCounter.from_arrays(xs, ptr, ny, cw), intervals, triplets)


def loads(data: bytes):
    if data[:8] != MAGIC:
        raise ValidationError("not a geometric index snapshot")
    rd = _Reader(data, 8)
    version, tag, d, k_num, k_den, scale = rd.unpack("<IIIQQQ")
    if version != VERSION:
        raise ValidationError(f"unsupported snapshot version {version}")
    k = Fraction(k_num, k_den)
    if tag == TAG_MULTI:
        (count,) = rd.unpack("<Q")
        copies = []
        for _ in range(count):
            (length,) = rd.unpack("<Q")
            copies.append(loads(rd.bytes(length)))
        index = MultiKIndex(k, copies)
    else:
        coords = []
        for _ in range(d):
            (size,) = rd.unpack("<Q")
            coords.append(rd.array(size, "<f8"))
        rmap = RankMap(coords)
        if tag == TAG_1D:
            index = GeoIndex1D(rmap, _read_line(rd), k, scale)
        elif tag == TAG_DD:
            (count,) = rd.unpack("<Q")
            slabs = {}
            for _ in range(count):
                flat = rd.array(2 * (d - 1)).tolist()
                key = tuple((flat[i], flat[i + 1]) for i in range(0, len(flat), 2))
                slabs[key] = _read_line(rd)
            index = GeoIndexD(rmap, slabs, k, scale)
        elif tag == TAG_TAB:
            shape = tuple(x for size in rmap.sizes for x in (size, size))
            table = rd.array(int(np.prod(shape)) if shape else 1).reshape(shape)
            index = TabulationIndex(rmap, table, k, scale)
        else:
            raise ValidationError(f"unknown structure tag {tag}")
    if rd.pos != len(data):
        raise ValidationError("trailing bytes in geometric snapshot")
    return index


def save_geo(index, path) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps(index))


def load_geo(path):
    with open(path, "rb") as fh:
        return loads(fh.read())


__all__ = [
    "RankMap", "rank_reduce", "snap_query", "MinimalInterval", "ColoredPoint", "minimal_intervals",
    "staircase_reduce", "DominanceCounter", "dominance_sum", "LineIndex", "build_line", "GeoIndex1D",
    "build_1d", "query_1d", "GeoIndexD", "build_dd", "query_dd", "TabulationIndex",
    "build_tabulation", "query_tabulation", "MultiKIndex", "build_multi_k", "query_multi_k",
    "dumps", "loads", "save_geo", "load_geo", "units_for", "GeoDataset",
]
