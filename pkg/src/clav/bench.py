"""Space/time tradeoff benchmark for the exact index over a grid of lambda values."""

from __future__ import annotations

import json
import math
import statistics
import time
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ResourceError
from .exact import build_exact, query_exact, space_report
from .model import RegionQuery, TripletStore, oracle_count, read_triplet_file


@dataclass
class BenchRow:
    lam: int
    large_regions: int | None = None
    tables: int | None = None
    stored_tuples: int | None = None
    words: int | None = None
    tuple_bound: int | None = None
    build_seconds: float | None = None
    median_query_seconds: float | None = None
    agrees_with_oracle: bool | None = None
    error: str | None = None


def gen_sized_instance(seed: int, n: int, sizes, time_range: tuple = (1, 100)) -> TripletStore:
    """Store whose region ``j`` holds ``sizes[j]`` distinct random users."""
    rng = np.random.default_rng(seed)
    sizes = np.minimum(n, np.maximum(1, np.asarray(sizes, dtype=np.int64)))
    users = np.concatenate([rng.choice(n, size=int(s), replace=False) for s in sizes])
    regions = np.repeat(np.arange(len(sizes), dtype=np.int64), sizes)
    times = rng.integers(time_range[0], time_range[1] + 1, size=len(users), dtype=np.int64)
    return TripletStore(users, regions, times, 1, n, len(sizes))


def gen_skewed_instance(seed: int, n: int, m: int, total: int, skew: float = 1.0,
                        time_range: tuple = (1, 100)) -> TripletStore:
    """Store with about ``total`` triplets and region sizes proportional to ``(j + 1) ** -skew``."""
    weights = (np.arange(1, m + 1, dtype=np.float64)) ** -skew
    sizes = np.round(weights / weights.sum() * total)
    return gen_sized_instance(seed, n, sizes, time_range)


def strata(store: TripletStore, r: int) -> list[np.ndarray]:
    """Regions sorted by size and cut into ``r`` contiguous groups, smallest first."""
    order = np.argsort(store.region_sizes(), kind="stable")
    return [g for g in np.array_split(order, r) if len(g)]


def workload(store: TripletStore, count: int, r: int, seed: int,
             stratified: bool = True) -> list[RegionQuery]:
    """Random ``r``-region queries with ``k`` spread over the aggregate range.

    Stratified queries take one region from each size stratum, so every
    query gains scan work at each point of :func:`lambda_grid`.
    """
    rng = np.random.default_rng(seed)
    hi = int(store.times.max()) * r if store.N else 1
    groups = strata(store, r)
    out = []
    for _ in range(count):
        if stratified:
            regions = [rng.choice(g) for g in groups]
        else:
            regions = rng.choice(store.m, size=r, replace=False)
        k = int(rng.integers(1, hi + 1))
        out.append(RegionQuery(tuple(int(j) for j in regions), store.as_time(k)))
    return out


def lambda_grid(store: TripletStore, r: int) -> list[int]:
    """``1``, the largest size of each stratum but the last, then ``N + 1``.

    Each step turns one more stratum small; ``r = 4`` gives a 5-point grid.
    """
    sizes = store.region_sizes()
    inner = [int(sizes[g].max()) for g in strata(store, r)[:-1]]
    return sorted(set([1] + inner + [store.N + 1]))


def tuple_bound(index) -> int:
    """2 * (#subsets of large regions of size <= r_max) * n + 2N."""
    count = len(index.large)
    subsets = sum(math.comb(count, t) for t in range(0, min(index.r_max, count) + 1))
    return 2 * subsets * index.store.n + 2 * index.store.N


def run_tradeoff(store: TripletStore, lambdas, queries, r_max: int, repeats: int = 3,
                 check: bool = True, max_tuples: int | None = None,
                 max_tables: int | None = None) -> list[BenchRow]:
    """One row per lambda. Each query is timed ``repeats`` times and its fastest run kept."""
    expected = [oracle_count(store, q) for q in queries] if check else None
    rows = []
    for lam in lambdas:
        row = BenchRow(lam=int(lam))
        try:
            t0 = time.perf_counter()
            index = build_exact(store, lam, r_max, max_tuples=max_tuples, max_tables=max_tables)
            row.build_seconds = time.perf_counter() - t0
        except ResourceError as exc:
            row.error = str(exc)
            rows.append(row)
            continue
        rep = space_report(index)
        row.large_regions = rep.large_regions
        row.tables = rep.tables
        row.stored_tuples = rep.stored_tuples
        row.words = rep.words
        row.tuple_bound = tuple_bound(index)
        latencies = []
        answers = []
        for q in queries:
            best = math.inf
            for _ in range(repeats):
                t0 = time.perf_counter()
                ans = query_exact(index, q)
                best = min(best, time.perf_counter() - t0)
            latencies.append(best)
            answers.append(ans)
        row.median_query_seconds = statistics.median(latencies) if latencies else 0.0
        if check:
            row.agrees_with_oracle = answers == expected
        rows.append(row)
        del index
    return rows


# two regions per tier, each tier about 3x the previous; N is about 10^5
DEFAULT_SIZES = (1200, 1200, 4000, 4000, 10000, 10000, 28000, 28000)


def default_instance(seed: int = 0) -> TripletStore:
    return gen_sized_instance(seed, 30000, DEFAULT_SIZES)


def run_config(config: dict) -> list[BenchRow]:
    """Run a benchmark described by a JSON-style dict.

    Keys: ``input`` (triplet file); or ``sizes`` (region sizes) with ``n``;
    or ``m``/``triplets``/``skew`` for a power-law instance, all with ``seed``.
    Also ``lambdas`` (list or ``"auto"``), ``rmax``, ``queries``, ``r``,
    ``stratified``, ``repeats``, ``check``, ``query_seed``.
    """
    seed = config.get("seed", 0)
    if "input" in config:
        store = read_triplet_file(config["input"])[0]
    elif "m" in config or "triplets" in config:
        store = gen_skewed_instance(seed, config.get("n", 20000), config.get("m", 30),
                                    config.get("triplets", 100000), config.get("skew", 1.0))
    else:
        store = gen_sized_instance(seed, config.get("n", 30000), config.get("sizes", DEFAULT_SIZES))
    r_max = config.get("rmax", config.get("r", 4))
    r = max(1, min(config.get("r", 4), r_max, store.m))
    lambdas = config.get("lambdas", "auto")
    if lambdas == "auto":
        lambdas = lambda_grid(store, r)
    queries = workload(store, config.get("queries", 200), r, config.get("query_seed", 1),
                       config.get("stratified", True))
    return run_tradeoff(store, lambdas, queries, r_max, config.get("repeats", 3),
                        config.get("check", True), config.get("max_tuples"), config.get("max_tables"))


def load_config(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def row_dict(row: BenchRow) -> dict:
    return {k: v for k, v in asdict(row).items() if v is not None}
