import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from clav import exact
from clav.errors import CapabilityError, ResourceError, ValidationError
from clav.exact import build_exact, projected_size, query_exact, space_report
from clav.model import RegionQuery, gen_instance, ingest_triplets, oracle_count
from conftest import brute_count


@pytest.mark.parametrize("lam", [1, 2, 3, 6])
def test_intro_answer(intro, lam):
    index = build_exact(intro, lam, 3)
    assert query_exact(index, RegionQuery((0, 1), 30)) == 2
    assert query_exact(index, RegionQuery((0, 1), 31)) == 1
    assert query_exact(index, RegionQuery((0, 1, 2), 35)) == 2
    assert query_exact(index, RegionQuery((2,), 21)) == 0


def test_intro_tables(intro):
    index = build_exact(intro, 1, 3)
    assert index.large == (0, 1)
    assert sorted(index.tables) == [(), (0,), (0, 1), (1,)]
    t = index.tables[(0, 1)]
    # u1: 20+15, u2: 15, u3: 30
    assert t.by_user_users.tolist() == [0, 1, 2]
    assert t.by_user_times.tolist() == [35, 15, 30]
    assert t.by_time_users.tolist() == [1, 2, 0]
    assert t.by_time_times.tolist() == [15, 30, 35]
    assert space_report(index).stored_tuples == 14


def test_ties_broken_by_user():
    store = ingest_triplets([(3, 0, 5), (1, 0, 5), (2, 0, 1)])
    t = build_exact(store, 1, 1).tables[(0,)]
    assert t.by_time_users.tolist() == [2, 1, 3]


def test_all_small_has_only_empty_table(intro):
    index = build_exact(intro, intro.N + 1, 2)
    assert index.large == () and list(index.tables) == [()]
    assert space_report(index).stored_tuples == 0


def test_capability(intro):
    index = build_exact(intro, 1, 2)
    with pytest.raises(CapabilityError):
        query_exact(index, RegionQuery((0, 1, 2), 1))


@pytest.mark.parametrize("lam,rmax", [(0, 1), (1, 0)])
def test_bad_params(intro, lam, rmax):
    with pytest.raises(ValidationError):
        build_exact(intro, lam, rmax)


def test_tuple_budget(intro):
    # checked before building against the projection 2 * sum of |R_j| per subset
    with pytest.raises(ResourceError) as err:
        build_exact(intro, 1, 3, max_tuples=15)
    assert err.value.count == 16 and err.value.budget == 15
    build_exact(intro, 1, 3, max_tuples=16)


def test_table_budget_from_env(intro, monkeypatch):
    monkeypatch.setenv("CLAV_BUDGET", "tables=3")
    with pytest.raises(ResourceError):
        build_exact(intro, 1, 3)
    monkeypatch.setenv("CLAV_BUDGET", "5")
    with pytest.raises(ResourceError):
        build_exact(intro, 1, 3)
    build_exact(intro, 1, 3, max_tuples=100)


def test_projected_size_is_exact_count_of_tables():
    store = gen_instance(2, 30, 8, 0.4)
    for lam in (1, 5, 10):
        index = build_exact(store, lam, 3)
        tables, tuples = projected_size(store.region_sizes()[list(index.large)], 3)
        assert tables == len(index.tables)
        assert space_report(index).stored_tuples <= tuples


def test_rational_times():
    store = ingest_triplets([(0, 0, "1/3"), (0, 1, "1/6"), (1, 0, "0.25"), (1, 1, "0.25")])
    for lam in (1, 3):
        index = build_exact(store, lam, 2)
        assert query_exact(index, RegionQuery((0, 1), Fraction(1, 2))) == 2
        assert query_exact(index, RegionQuery((0, 1), Fraction(1, 2) + Fraction(1, 100))) == 0
        assert query_exact(index, RegionQuery((0,), "0.3")) == 1


instances = st.tuples(st.integers(0, 10**6), st.integers(1, 25), st.integers(1, 8),
                      st.floats(0.05, 0.9))


@settings(max_examples=60, deadline=None)
@given(instances, st.integers(1, 4), st.data())
def test_matches_oracle(inst, rmax, data):
    seed, n, m, density = inst
    store = gen_instance(seed, n, m, density, (1, 20))
    lam = data.draw(st.sampled_from([1, max(1, math.isqrt(store.N)), store.N + 1, 3]))
    index = build_exact(store, lam, rmax)
    records = [(t.user, t.region, t.time) for t in store.triplets()]
    for _ in range(10):
        regions = data.draw(st.sets(st.integers(0, m - 1), min_size=1, max_size=min(rmax, m)))
        k = data.draw(st.integers(1, 20 * len(regions) + 1))
        q = RegionQuery(tuple(regions), k)
        assert query_exact(index, q) == oracle_count(store, q) == brute_count(records, regions, k)


def test_stored_tuples_bound():
    store = gen_instance(9, 40, 10, 0.5)
    for lam in (1, 10, 20, store.N + 1):
        index = build_exact(store, lam, 3)
        big = len(index.large)
        subsets = sum(math.comb(big, t) for t in range(min(3, big) + 1))
        assert space_report(index).stored_tuples <= 2 * subsets * store.n + 2 * store.N


def test_snapshot_round_trip(tmp_path):
    store = gen_instance(4, 25, 6, 0.5)
    index = build_exact(store, 5, 3)
    blob = exact.dumps(index)
    again = exact.loads(blob)
    assert exact.dumps(again) == blob
    assert again.store == store
    exact.save_exact(index, tmp_path / "x.bin")
    assert (tmp_path / "x.bin").read_bytes() == blob
    loaded = exact.load_exact(tmp_path / "x.bin")
    rng = np.random.default_rng(0)
    for _ in range(50):
        q = RegionQuery(tuple(rng.choice(6, size=2, replace=False)), int(rng.integers(1, 200)))
        assert query_exact(loaded, q) == query_exact(index, q)


def test_snapshot_rejects_corruption(intro):
    blob = exact.dumps(build_exact(intro, 1, 2))
    with pytest.raises(ValidationError):
        exact.loads(blob[:-3])
    with pytest.raises(ValidationError):
        exact.loads(b"garbage!" + blob[8:])
    with pytest.raises(ValidationError):
        exact.loads(blob + b"\0")


def test_empty_store():
    store = ingest_triplets([], n=0, m=3)
    index = build_exact(store, 1, 2)
    assert index.large == () and query_exact(index, RegionQuery((0, 2), 1)) == 0
    assert space_report(index).stored_tuples == 0


def test_no_double_counting():
    store = gen_instance(12, 30, 6, 0.6, (1, 10))
    index = build_exact(store, 8, 3)
    for regions in ((0, 1, 2), (3, 4, 5), (1, 3)):
        n_q = len(np.unique(store.users[np.isin(store.regions, regions)]))
        assert query_exact(index, RegionQuery(regions, 1)) == n_q


def test_documented_rmax2_table(intro):
    index = build_exact(intro, 1, 2)
    t = index.tables[(0, 1)]
    assert list(zip(t.by_time_users.tolist(), t.by_time_times.tolist())) == [(1, 15), (2, 30), (0, 35)]
    assert space_report(index).stored_tuples == 2 * (0 + 2 + 2 + 3)
    assert space_report(index) == space_report(index)
