"""Exact large/small-region tradeoff index.

Regions with more than ``lam`` users are *large*. For every subset of large
regions of size at most ``r_max`` the index stores the per-user aggregate
times twice: sorted by time (to count users at or above ``k`` with one binary
search) and sorted by user (to look a user's large-part time up). Small
regions in a query are scanned at query time.
"""

from __future__ import annotations

import itertools
import math
import struct
from dataclasses import dataclass

import numpy as np

from . import kernels
from .budget import budget
from .errors import CapabilityError, ResourceError, ValidationError
from .model import RegionQuery, TripletStore

MAGIC = b"CLAVEXI\0"
VERSION = 1


@dataclass(frozen=True)
class SubsetTable:
    by_time_users: np.ndarray
    by_time_times: np.ndarray
    by_user_users: np.ndarray
    by_user_times: np.ndarray

    def __len__(self):
        return len(self.by_user_users)


_EMPTY = np.zeros(0, dtype=np.int64)
_EMPTY.setflags(write=False)
EMPTY_TABLE = SubsetTable(_EMPTY, _EMPTY, _EMPTY, _EMPTY)


@dataclass
class ExactIndex:
    lam: int
    r_max: int
    large: tuple
    tables: dict
    store: TripletStore

    @property
    def large_set(self) -> frozenset:
        return frozenset(self.large)


@dataclass(frozen=True)
class SpaceReport:
    stored_tuples: int
    tables: int
    large_regions: int
    base_triplets: int
    words: int


def _aggregate(store: TripletStore, regions) -> SubsetTable:
    if not regions:
        return EMPTY_TABLE
    parts_u = [store.region(j)[0] for j in regions]
    parts_t = [store.region(j)[1] for j in regions]
    users = np.concatenate(parts_u)
    times = np.concatenate(parts_t)
    if len(regions) > 1:
        order = np.argsort(users, kind="stable")
        users = users[order]
        times = times[order]
        starts = np.flatnonzero(np.r_[True, users[1:] != users[:-1]]) if len(users) else _EMPTY
        users = users[starts] if len(users) else users
        times = np.add.reduceat(times, starts) if len(starts) else times
    users = np.ascontiguousarray(users, dtype=np.int64)
    times = np.ascontiguousarray(times, dtype=np.int64)
    # ties in time broken by user id
    by_time = np.lexsort((users, times))
    table = SubsetTable(users[by_time], times[by_time], users, times)
    for arr in (table.by_time_users, table.by_time_times, table.by_user_users, table.by_user_times):
        arr.setflags(write=False)
    return table


def projected_size(sizes, r_max: int) -> tuple[int, int]:
    """Upper bounds (table count, stored tuples) for the given large-region sizes."""
    count = len(sizes)
    tables = sum(math.comb(count, t) for t in range(0, min(r_max, count) + 1))
    total = int(sum(sizes))
    # each region joins comb(count-1, t-1) subsets of size t
    tuples = 2 * sum(total * math.comb(count - 1, t - 1) for t in range(1, min(r_max, count) + 1))
    return tables, tuples


def build_exact(store: TripletStore, lam: int, r_max: int, max_tuples: int | None = None,
                max_tables: int | None = None) -> ExactIndex:
    """Precompute aggregates for every subset of large regions of size <= ``r_max``."""
    lam = int(lam)
    r_max = int(r_max)
    if lam < 1:
        raise ValidationError(f"lambda must be >= 1, got {lam}")
    if r_max < 1:
        raise ValidationError(f"r_max must be >= 1, got {r_max}")
    sizes = store.region_sizes()
    large = tuple(int(j) for j in np.flatnonzero(sizes > lam))

    table_budget = budget("tables", max_tables)
    tuple_budget = budget("tuples", max_tuples)
    n_tables, n_tuples = projected_size(sizes[list(large)], r_max)
    if n_tables > table_budget:
        raise ResourceError("subset tables", n_tables, table_budget)
    if n_tuples > tuple_budget:
        raise ResourceError("stored tuples", n_tuples, tuple_budget)

    subsets = [()]
    for t in range(1, min(r_max, len(large)) + 1):
        subsets.extend(itertools.combinations(large, t))
    subsets.sort()
    tables = {key: _aggregate(store, key) for key in subsets}
    return ExactIndex(lam, r_max, large, tables, store)


def query_exact(index: ExactIndex, q: RegionQuery) -> int:
    store = index.store
    store.validate_query(q)
    if q.r > index.r_max:
        raise CapabilityError(f"query has {q.r} regions but the index supports at most {index.r_max}")
    k = store.k_units(q.k)
    large = index.large_set
    q_large = tuple(j for j in q.regions if j in large)
    q_small = [j for j in q.regions if j not in large]

    table = index.tables[q_large]
    n_large = len(table.by_time_times) - int(np.searchsorted(table.by_time_times, k, side="left"))
    if not q_small:
        return n_large

    if len(q_small) == 1:
        users, times = store.region(q_small[0])
    else:
        users = np.concatenate([store.region(j)[0] for j in q_small])
        times = np.concatenate([store.region(j)[1] for j in q_small])
        order = np.argsort(users, kind="stable")
        users = users[order]
        times = times[order]
    n_small = kernels.small_region_count(
        np.ascontiguousarray(users), np.ascontiguousarray(times),
        table.by_user_users, table.by_user_times, k)
    return n_large + int(n_small)


def space_report(index: ExactIndex) -> SpaceReport:
    stored = sum(2 * len(t) for t in index.tables.values())
    return SpaceReport(
        stored_tuples=stored,
        tables=len(index.tables),
        large_regions=len(index.large),
        base_triplets=index.store.N,
        words=stored * 2 + index.store.N * 3,
    )


# --------------------------------------------------------------------------
# Snapshot format
#
#   header    magic(8) version:u32 lambda:u64 r_max:u32 n:u64 m:u64 N:u64 scale:u64
#   large     count:u64, ids:i64[count]
#   directory count:u64, then per subset: size:u32, ids:i64[size], length:u64
#   tables    per subset in directory order: four i64[length] arrays
#             (by-time users, by-time times, by-user users, by-user times)
#   base      users:i64[N] regions:i64[N] times:i64[N]
#
# All integers little-endian.
# --------------------------------------------------------------------------


def _arr(a) -> bytes:
    return np.ascontiguousarray(a, dtype="<i8").tobytes()


def dumps(index: ExactIndex) -> bytes:
    store = index.store
    out = [MAGIC, struct.pack("<IQIQQQQ", VERSION, index.lam, index.r_max, store.n, store.m,
                              store.N, store.scale)]
    out.append(struct.pack("<Q", len(index.large)))
    out.append(_arr(index.large))
    keys = sorted(index.tables)
    out.append(struct.pack("<Q", len(keys)))
    for key in keys:
        out.append(struct.pack("<I", len(key)))
        out.append(_arr(key))
        out.append(struct.pack("<Q", len(index.tables[key])))
    for key in keys:
        t = index.tables[key]
        out.extend(_arr(a) for a in (t.by_time_users, t.by_time_times, t.by_user_users, t.by_user_times))
    out.extend(_arr(a) for a in (store.users, store.regions, store.times))
    return b"".join(out)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def unpack(self, fmt):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.data):
            raise ValidationError("truncated snapshot")
        vals = struct.unpack_from(fmt, self.data, self.pos)
        self.pos += size
        return vals

    def ints(self, count):
        size = 8 * count
        if self.pos + size > len(self.data):
            raise ValidationError("truncated snapshot")
        arr = np.frombuffer(self.data, dtype="<i8", count=count, offset=self.pos).astype(np.int64)
        self.pos += size
        return arr


def loads(data: bytes) -> ExactIndex:
    if data[:8] != MAGIC:
        raise ValidationError("not an exact-index snapshot")
    rd = _Reader(data)
    rd.pos = 8
    version, lam, r_max, n, m, N, scale = rd.unpack("<IQIQQQQ")
    if version != VERSION:
        raise ValidationError(f"unsupported snapshot version {version}")
    (n_large,) = rd.unpack("<Q")
    large = tuple(int(x) for x in rd.ints(n_large))
    (n_keys,) = rd.unpack("<Q")
    directory = []
    for _ in range(n_keys):
        (size,) = rd.unpack("<I")
        key = tuple(int(x) for x in rd.ints(size))
        (length,) = rd.unpack("<Q")
        directory.append((key, length))
    tables = {}
    for key, length in directory:
        arrays = [rd.ints(length) for _ in range(4)]
        for a in arrays:
            a.setflags(write=False)
        tables[key] = SubsetTable(*arrays) if length or key else EMPTY_TABLE
    users, regions, times = (rd.ints(N) for _ in range(3))
    if rd.pos != len(data):
        raise ValidationError("trailing bytes in snapshot")
    store = TripletStore(users, regions, times, scale, n, m)
    return ExactIndex(lam, r_max, large, tables, store)


def save_exact(index: ExactIndex, path) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps(index))


def load_exact(path) -> ExactIndex:
    with open(path, "rb") as fh:
        return loads(fh.read())
