"""Triplet data model, ingestion, brute-force oracles and instance generators.

Times are exact rationals. A store keeps them as int64 multiples of
``1/scale`` where ``scale`` is the lcm of every input denominator, so all
downstream comparisons against a threshold are integer comparisons.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

from .errors import ParseError, ValidationError

# Every scaled aggregate must stay below this so int64 sums never wrap.
UNIT_LIMIT = 2**62


def to_time(value) -> Fraction:
    """Convert ``value`` to an exact Fraction (sign is not checked here).

    Strings may be decimals (``"1.25"``, ``"3e2"``) or ratios (``"1/3"``).
    Floats go through their shortest repr, so ``0.1`` becomes ``1/10``.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, np.integer)):
        return Fraction(int(value))
    if isinstance(value, (float, np.floating)):
        if not math.isfinite(value):
            raise ValidationError(f"time must be finite, got {value!r}")
        return Fraction(repr(float(value)))
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise ValidationError(f"cannot parse time {value!r}") from exc
    try:
        return Fraction(value)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"cannot interpret {value!r} as a time") from exc


def format_time(t: Fraction) -> str:
    """Inverse of :func:`to_time` that round-trips exactly."""
    t = Fraction(t)
    if t.denominator == 1:
        return str(t.numerator)
    den = t.denominator
    twos = fives = 0
    while den % 2 == 0:
        den //= 2
        twos += 1
    while den % 5 == 0:
        den //= 5
        fives += 1
    if den != 1:
        return f"{t.numerator}/{t.denominator}"
    digits = max(twos, fives)
    scaled = t * 10**digits
    sign = "-" if scaled < 0 else ""
    body = str(abs(scaled.numerator)).rjust(digits + 1, "0")
    return f"{sign}{body[:-digits]}.{body[-digits:]}"


def _common_scale(times: Iterable[Fraction]) -> int:
    scale = 1
    for t in times:
        scale = math.lcm(scale, t.denominator)
    if scale >= UNIT_LIMIT:
        raise ValidationError("time precision exceeds exact 64-bit scaled arithmetic")
    return scale


def units_for(k, scale: int) -> int:
    """Smallest integer unit count ``u`` with ``u / scale >= k``.

    Clamped to :data:`UNIT_LIMIT`, which no stored aggregate can reach.
    """
    k = to_time(k)
    if k <= 0:
        raise ValidationError(f"threshold k must be positive, got {k}")
    scaled = k * scale
    units = -((-scaled.numerator) // scaled.denominator)
    return min(units, UNIT_LIMIT)


# --------------------------------------------------------------------------
# Domain types
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Triplet:
    user: int
    region: int
    time: Fraction


@dataclass(frozen=True)
class RegionQuery:
    """A set of distinct region ids and a positive threshold."""

    regions: tuple
    k: Fraction

    def __post_init__(self):
        regions = tuple(int(j) for j in self.regions)
        if not regions:
            raise ValidationError("query must name at least one region")
        if len(set(regions)) != len(regions):
            raise ValidationError(f"duplicate region ids in query {regions}")
        object.__setattr__(self, "regions", tuple(sorted(regions)))
        k = to_time(self.k)
        if k <= 0:
            raise ValidationError(f"threshold k must be positive, got {k}")
        object.__setattr__(self, "k", k)

    @property
    def r(self) -> int:
        return len(self.regions)


@dataclass(frozen=True)
class GeoTriplet:
    user: int
    point: tuple
    time: Fraction


@dataclass(frozen=True)
class RectQuery:
    """Closed axis-aligned box ``[lo, hi]`` with threshold ``k``."""

    lo: tuple
    hi: tuple
    k: Fraction

    def __post_init__(self):
        lo = tuple(float(x) for x in self.lo)
        hi = tuple(float(x) for x in self.hi)
        if len(lo) != len(hi) or not lo:
            raise ValidationError("lo and hi must be non-empty and of equal dimension")
        if any(a > b for a, b in zip(lo, hi)):
            raise ValidationError(f"rectangle has lo > hi: {lo} {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        k = to_time(self.k)
        if k <= 0:
            raise ValidationError(f"threshold k must be positive, got {k}")
        object.__setattr__(self, "k", k)

    @property
    def d(self) -> int:
        return len(self.lo)


# --------------------------------------------------------------------------
# TripletStore
# --------------------------------------------------------------------------


class TripletStore:
    """Immutable, deduplicated triplets with a lexicographic and a per-region view.

    ``users``, ``regions`` and ``times`` are sorted by (user, region).
    ``region_users[region_ptr[j]:region_ptr[j+1]]`` is R_j sorted by user,
    aligned with ``region_times``.
    """

    def __init__(self, users, regions, times, scale: int, n: int, m: int):
        users = np.ascontiguousarray(users, dtype=np.int64)
        regions = np.ascontiguousarray(regions, dtype=np.int64)
        times = np.ascontiguousarray(times, dtype=np.int64)
        order = np.lexsort((regions, users))
        self.users = users[order]
        self.regions = regions[order]
        self.times = times[order]
        self.scale = int(scale)
        self.n = int(n)
        self.m = int(m)
        self.N = int(len(self.users))
        if self.n * max(self.m, 1) >= UNIT_LIMIT:
            raise ValidationError("n*m too large for packed (user, region) keys")
        self.keys = self.users * self.m + self.regions
        if self.N > 1 and not np.all(np.diff(self.keys) > 0):
            raise ValidationError("duplicate (user, region) pairs in store")

        by_region = np.argsort(self.regions, kind="stable")
        self.region_users = self.users[by_region]
        self.region_times = self.times[by_region]
        counts = np.bincount(self.regions, minlength=self.m) if self.N else np.zeros(self.m, np.int64)
        self.region_ptr = np.zeros(self.m + 1, dtype=np.int64)
        np.cumsum(counts, out=self.region_ptr[1:])
        for arr in (self.users, self.regions, self.times, self.keys,
                    self.region_users, self.region_times, self.region_ptr):
            arr.setflags(write=False)

    # -- views -------------------------------------------------------------

    def region_size(self, j: int) -> int:
        return int(self.region_ptr[j + 1] - self.region_ptr[j])

    def region_sizes(self) -> np.ndarray:
        return np.diff(self.region_ptr)

    def region(self, j: int):
        """(users, times) of R_j, sorted by user."""
        a, b = self.region_ptr[j], self.region_ptr[j + 1]
        return self.region_users[a:b], self.region_times[a:b]

    def triplets(self) -> Iterator[Triplet]:
        for u, j, t in zip(self.users.tolist(), self.regions.tolist(), self.times.tolist()):
            yield Triplet(u, j, Fraction(t, self.scale))

    def __len__(self):
        return self.N

    def __eq__(self, other):
        if not isinstance(other, TripletStore):
            return NotImplemented
        if (self.n, self.m, self.N) != (other.n, other.m, other.N):
            return False
        if not np.array_equal(self.keys, other.keys):
            return False
        if self.scale == other.scale:
            return bool(np.array_equal(self.times, other.times))
        return all(Fraction(int(a), self.scale) == Fraction(int(b), other.scale)
                   for a, b in zip(self.times, other.times))

    def __repr__(self):
        return f"TripletStore(n={self.n}, m={self.m}, N={self.N})"

    # -- units -------------------------------------------------------------

    def k_units(self, k) -> int:
        return units_for(k, self.scale)

    def as_time(self, units: int) -> Fraction:
        return Fraction(int(units), self.scale)

    def lookup_units(self, user: int, region: int) -> int:
        if not (0 <= region < self.m) or user < 0:
            return 0
        key = user * self.m + region
        pos = int(np.searchsorted(self.keys, key))
        if pos < self.N and self.keys[pos] == key:
            return int(self.times[pos])
        return 0

    def validate_query(self, q: RegionQuery) -> None:
        if q.r > max(self.m, 0) or any(not (0 <= j < self.m) for j in q.regions):
            bad = [j for j in q.regions if not (0 <= j < self.m)]
            if bad:
                raise ValidationError(f"unknown region id(s) {bad} (m={self.m})")
            raise ValidationError(f"query size {q.r} exceeds m={self.m}")

    def query_triplet_count(self, regions: Sequence[int]) -> int:
        """N_Q: number of triplets inside the regions."""
        return int(sum(self.region_size(j) for j in regions))


def lookup_time(store: TripletStore, user: int, region: int) -> Fraction:
    """tau(user, region), or 0 when the pair is absent."""
    return store.as_time(store.lookup_units(user, region))


def ingest_triplets(records: Iterable, n: int | None = None, m: int | None = None) -> TripletStore:
    """Build a store from ``(user, region, time)`` records with integer ids.

    Duplicate (user, region) records are merged by summing their times.
    """
    merged: dict = {}
    for idx, rec in enumerate(records):
        if isinstance(rec, Triplet):
            user, region, time = rec.user, rec.region, rec.time
        else:
            try:
                user, region, time = rec
            except (TypeError, ValueError) as exc:
                raise ParseError(f"record {rec!r} is not a (user, region, time) triple", idx + 1) from exc
        user, region, time = int(user), int(region), to_time(time)
        if user < 0 or region < 0:
            raise ValidationError(f"record {idx + 1}: ids must be non-negative")
        if time <= 0:
            raise ValidationError(f"record {idx + 1}: time must be positive, got {time}")
        key = (user, region)
        merged[key] = merged.get(key, 0) + time
    return _store_from_merged(merged, n, m)


def _store_from_merged(merged: dict, n, m) -> TripletStore:
    max_user = max((u for u, _ in merged), default=-1)
    max_region = max((j for _, j in merged), default=-1)
    n = max_user + 1 if n is None else int(n)
    m = max_region + 1 if m is None else int(m)
    if max_user >= n or max_region >= m:
        raise ValidationError(f"ids exceed declared n={n}, m={m}")
    scale = _common_scale(merged.values())
    size = len(merged)
    users = np.fromiter((u for u, _ in merged), dtype=np.int64, count=size)
    regions = np.fromiter((j for _, j in merged), dtype=np.int64, count=size)
    total = sum(t * scale for t in merged.values())
    if total >= UNIT_LIMIT:
        raise ValidationError("total time exceeds exact 64-bit scaled arithmetic")
    times = np.fromiter((int(t * scale) for t in merged.values()), dtype=np.int64, count=size)
    return TripletStore(users, regions, times, scale, n, m)


# --------------------------------------------------------------------------
# Files and id mapping
# --------------------------------------------------------------------------


class IdMap:
    """Dense-id assignment for external string ids, in first-seen order."""

    def __init__(self, names: Sequence[str] = ()):
        self.names = list(names)
        self._index = {name: i for i, name in enumerate(self.names)}

    def get(self, name: str) -> int:
        idx = self._index.get(name)
        if idx is None:
            idx = len(self.names)
            self.names.append(name)
            self._index[name] = idx
        return idx

    def lookup(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise ValidationError(f"unknown id {name!r}") from None

    def __contains__(self, name) -> bool:
        return name in self._index

    def __len__(self):
        return len(self.names)


def sidecar_path(path) -> str:
    return f"{os.fspath(path)}.ids.json"


def save_mapping(path, users: IdMap, places: IdMap, kind: str = "regions") -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"users": users.names, kind: places.names}, fh)


def load_mapping(path, kind: str = "regions"):
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    return IdMap(raw["users"]), IdMap(raw.get(kind, []))


def _records(path) -> Iterator[tuple[int, list[str]]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            yield lineno, [field.strip() for field in line.split(",")]


def _parse_time(raw: str, lineno: int) -> Fraction:
    try:
        t = Fraction(raw)
    except (ValueError, ZeroDivisionError):
        raise ParseError(f"bad time field {raw!r}", lineno) from None
    if t <= 0:
        raise ValidationError(f"line {lineno}: time must be positive, got {raw}")
    return t


def read_triplet_file(path, mapping_path=None):
    """Parse a ``user,region,time`` file. Returns ``(store, users, regions)``.

    When a sidecar mapping exists (``<path>.ids.json`` or ``mapping_path``)
    it seeds the id assignment so dense ids are stable across rewrites.
    """
    mapping_path = mapping_path or sidecar_path(path)
    if os.path.exists(mapping_path):
        users, regions = load_mapping(mapping_path)
    else:
        users, regions = IdMap(), IdMap()
    merged: dict = {}
    for lineno, fields in _records(path):
        if len(fields) != 3 or not fields[0] or not fields[1]:
            raise ParseError(f"expected 'user,region,time', got {len(fields)} field(s)", lineno)
        t = _parse_time(fields[2], lineno)
        key = (users.get(fields[0]), regions.get(fields[1]))
        merged[key] = merged.get(key, 0) + t
    store = _store_from_merged(merged, len(users), len(regions))
    return store, users, regions


def write_triplet_file(store: TripletStore, path, users: IdMap | None = None,
                       regions: IdMap | None = None) -> None:
    """Write ``store`` plus its sidecar mapping; reading back gives an equal store."""
    users = users or IdMap([str(i) for i in range(store.n)])
    regions = regions or IdMap([str(j) for j in range(store.m)])
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# user,region,time\n")
        for trip in store.triplets():
            fh.write(f"{users.names[trip.user]},{regions.names[trip.region]},{format_time(trip.time)}\n")
    save_mapping(sidecar_path(path), users, regions)


# --------------------------------------------------------------------------
# Geometric datasets
# --------------------------------------------------------------------------


class GeoDataset:
    """Array form of a list of GeoTriplets, duplicates (user, point) merged."""

    def __init__(self, users, coords, times, scale: int, d: int, n: int | None = None):
        self.users = np.ascontiguousarray(users, dtype=np.int64)
        self.coords = np.ascontiguousarray(coords, dtype=np.float64).reshape(len(self.users), d)
        self.times = np.ascontiguousarray(times, dtype=np.int64)
        self.scale = int(scale)
        self.d = int(d)
        self.N = len(self.users)
        self.n = int(self.users.max()) + 1 if n is None and self.N else int(n or 0)

    @classmethod
    def from_triplets(cls, triplets: Iterable[GeoTriplet], d: int | None = None) -> "GeoDataset":
        merged: dict = {}
        for idx, trip in enumerate(triplets):
            point = tuple(float(x) for x in trip.point)
            if d is None:
                d = len(point)
            if len(point) != d:
                raise ValidationError(f"triplet {idx + 1} has dimension {len(point)}, expected {d}")
            t = to_time(trip.time)
            if t <= 0:
                raise ValidationError(f"triplet {idx + 1}: time must be positive, got {t}")
            key = (int(trip.user), point)
            merged[key] = merged.get(key, 0) + t
        if d is None:
            raise ValidationError("dimension d is required for an empty dataset")
        scale = _common_scale(merged.values())
        if sum(t * scale for t in merged.values()) >= UNIT_LIMIT:
            raise ValidationError("total time exceeds exact 64-bit scaled arithmetic")
        users = [u for u, _ in merged]
        coords = [p for _, p in merged]
        times = [int(t * scale) for t in merged.values()]
        return cls(np.array(users, dtype=np.int64), np.array(coords, dtype=np.float64).reshape(-1, d),
                   np.array(times, dtype=np.int64), scale, d)

    def triplets(self) -> list[GeoTriplet]:
        return [GeoTriplet(int(u), tuple(float(x) for x in p), Fraction(int(t), self.scale))
                for u, p, t in zip(self.users, self.coords, self.times)]

    def k_units(self, k) -> int:
        return units_for(k, self.scale)

    def __len__(self):
        return self.N


def as_geo_dataset(dataset, d: int | None = None) -> GeoDataset:
    if isinstance(dataset, GeoDataset):
        return dataset
    return GeoDataset.from_triplets(dataset, d)


def read_geo_file(path, mapping_path=None):
    """Parse a ``user,x_1,...,x_d,time`` file. Returns ``(dataset, users)``."""
    mapping_path = mapping_path or sidecar_path(path)
    users = load_mapping(mapping_path, "points")[0] if os.path.exists(mapping_path) else IdMap()
    triplets = []
    d = None
    for lineno, fields in _records(path):
        if len(fields) < 3:
            raise ParseError("expected 'user,x_1,...,x_d,time'", lineno)
        if d is None:
            d = len(fields) - 2
        elif len(fields) - 2 != d:
            raise ParseError(f"expected {d} coordinates, got {len(fields) - 2}", lineno)
        try:
            point = tuple(float(x) for x in fields[1:-1])
        except ValueError:
            raise ParseError(f"bad coordinate in {fields[1:-1]}", lineno) from None
        if not all(math.isfinite(x) for x in point):
            raise ParseError("coordinates must be finite", lineno)
        triplets.append(GeoTriplet(users.get(fields[0]), point, _parse_time(fields[-1], lineno)))
    if d is None:
        raise ValidationError(f"{path}: no records")
    dataset = GeoDataset.from_triplets(triplets, d)
    dataset.n = len(users)
    return dataset, users


def write_geo_file(dataset, path) -> None:
    ds = as_geo_dataset(dataset)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# user,x_1,...,x_d,time\n")
        for trip in ds.triplets():
            coords = ",".join(repr(x) for x in trip.point)
            fh.write(f"{trip.user},{coords},{format_time(trip.time)}\n")


# --------------------------------------------------------------------------
# Oracles
# --------------------------------------------------------------------------


def oracle_count(store: TripletStore, q: RegionQuery) -> int:
    """Number of users whose summed time over ``q.regions`` is at least ``q.k``, by full scan."""
    store.validate_query(q)
    mask = np.isin(store.regions, np.asarray(q.regions, dtype=np.int64))
    sums = np.zeros(store.n, dtype=np.int64)
    np.add.at(sums, store.users[mask], store.times[mask])
    return int(np.count_nonzero(sums >= store.k_units(q.k)))


def oracle_geo_count(dataset, q: RectQuery) -> int:
    """Number of users with at least ``q.k`` time inside the closed box, by full scan."""
    ds = as_geo_dataset(dataset, q.d)
    if ds.d != q.d:
        raise ValidationError(f"query dimension {q.d} does not match data dimension {ds.d}")
    if not ds.N:
        return 0
    inside = np.all((ds.coords >= np.asarray(q.lo)) & (ds.coords <= np.asarray(q.hi)), axis=1)
    sums: dict = {}
    for u, t in zip(ds.users[inside].tolist(), ds.times[inside].tolist()):
        sums[u] = sums.get(u, 0) + t
    k = ds.k_units(q.k)
    return sum(1 for total in sums.values() if total >= k)


# --------------------------------------------------------------------------
# Generators
# --------------------------------------------------------------------------


def gen_instance(seed: int, n: int, m: int, density: float = 0.5,
                 time_range: tuple = (1, 100)) -> TripletStore:
    """Random store: each (user, region) pair present with probability ``density``.

    Times are integers drawn uniformly from the inclusive ``time_range``.
    """
    if n < 1 or m < 1:
        raise ValidationError("n and m must be positive")
    if not (0 < density <= 1):
        raise ValidationError("density must lie in (0, 1]")
    lo, hi = time_range
    if lo <= 0 or hi < lo:
        raise ValidationError("time_range must be positive and ordered")
    rng = np.random.default_rng(seed)
    present = rng.random((n, m)) < density if density < 1 else np.ones((n, m), dtype=bool)
    users, regions = np.nonzero(present)
    times = rng.integers(lo, hi + 1, size=len(users), dtype=np.int64)
    return TripletStore(users, regions, times, 1, n, m)


def gen_geo_instance(seed: int, n: int, m: int, d: int, time_range: tuple = (1, 10),
                     density: float = 0.3, grid: int | None = None) -> list[GeoTriplet]:
    """Random geometric instance over ``m`` distinct integer-grid points in ``d`` dims.

    Coordinates are drawn from ``[0, grid)``; a small ``grid`` forces shared
    coordinates, which exercises rank ties.
    """
    if n < 1 or m < 1 or d < 1:
        raise ValidationError("n, m and d must be positive")
    rng = np.random.default_rng(seed)
    grid = grid or 4 * m
    if grid**d < m:
        raise ValidationError("grid too small for m distinct points")
    points: list = []
    seen: set = set()
    while len(points) < m:
        p = tuple(float(x) for x in rng.integers(0, grid, size=d))
        if p not in seen:
            seen.add(p)
            points.append(p)
    lo, hi = time_range
    out = []
    for u in range(n):
        visits = np.nonzero(rng.random(m) < density)[0]
        if len(visits) == 0:
            visits = [int(rng.integers(0, m))]
        for idx in visits:
            out.append(GeoTriplet(u, points[int(idx)], Fraction(int(rng.integers(lo, hi + 1)))))
    return out


def axis_points(d: int, half: int) -> list[tuple]:
    """Points with one nonzero coordinate in ``{-half..half} \\ {0}``, 2*d*half in total."""
    pts = []
    for axis in range(d):
        for s in range(-half, half + 1):
            if s == 0:
                continue
            p = [0.0] * d
            p[axis] = float(s)
            pts.append(tuple(p))
    return pts


def gen_axis_instance(d: int, half: int,
                      assign: Callable[[int, tuple], Iterable] | None = None) -> list[GeoTriplet]:
    """Adversarial layout on the coordinate axes.

    ``assign(index, point)`` yields the ``(user, time)`` pairs placed at each
    point; by default user 0 spends unit time everywhere.
    """
    if d < 1 or half < 1:
        raise ValidationError("d and half must be positive")
    assign = assign or (lambda i, p: [(0, 1)])
    out = []
    for idx, point in enumerate(axis_points(d, half)):
        for user, time in assign(idx, point):
            out.append(GeoTriplet(int(user), point, to_time(time)))
    return out
