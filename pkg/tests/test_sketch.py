from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from clav import sketch
from clav.errors import CapabilityError, ValidationError
from clav.model import RegionQuery, gen_instance, ingest_triplets
from clav.sketch import (
    build_sketches,
    increments,
    level_estimates,
    make_params,
    merge_sketches,
    query_sketches,
    sketch_from_times,
    sketch_query,
    sketch_size_bits,
    tail,
)


def params(**kw):
    base = dict(n=100, r=3, k=30, epsilon=0.25, delta=0.1, seed=1)
    base.update(kw)
    return make_params(**base)


def brute_tail(x, levels):
    if x == 0:
        return levels - 1
    z = 0
    while x % 2 == 0:
        x //= 2
        z += 1
    return min(z, levels - 1)


@given(st.integers(0, 2**31 - 2), st.integers(1, 31))
def test_tail(x, levels):
    assert tail(x, levels) == brute_tail(x, levels)
    assert tail(np.array([x]), levels).tolist() == [brute_tail(x, levels)]


def test_shape_constants():
    p = params()
    assert p.repetitions == 19          # ceil(8 ln 10)
    assert p.levels == 7                # bit length of 100
    assert p.width == 4                 # ceil(1 / 0.25)
    assert (p.cap, p.threshold, p.counter_bits) == (9, 6, 4)
    assert sketch_size_bits(p) == 19 * 7 * 4 * 4
    assert make_params(100, 3, 30, 0.1, 0.1).width == 10


@pytest.mark.parametrize("bad", [dict(r=1), dict(n=0), dict(n=2**31 - 1), dict(k=0), dict(epsilon=1),
                                 dict(delta=0)])
def test_param_validation(bad):
    with pytest.raises(ValidationError):
        params(**bad)


@given(st.lists(st.integers(1, 500), max_size=20), st.integers(2, 5),
       st.fractions(min_value=Fraction(1, 2), max_value=200, max_denominator=7), st.integers(1, 6))
def test_increments(times, r, k, scale):
    p = params(r=r, k=k)
    got = increments(np.array(times, dtype=np.int64), scale, p)
    want = [int(Fraction(t, scale) * r * r / k) for t in times]
    assert got.tolist() == want


def test_hash_levels_are_seeded():
    a, b = params(seed=5), params(seed=5)
    users = np.arange(100)
    assert np.array_equal(a.levels_of(users), b.levels_of(users))
    assert not np.array_equal(a.levels_of(users), params(seed=6).levels_of(users))
    assert a.levels_of(users).max() < a.levels


def test_single_user_is_exact():
    p = params()
    for user in range(0, 100, 7):
        sk = sketch_from_times([user], [30], 1, p)
        want = [1 << int(lv) for lv in p.levels_of([user])[:, 0]]
        assert level_estimates(sk) == want


def test_short_visit_is_invisible():
    p = params()
    # 3 < k / r^2 = 30 / 9 gives increment 0
    assert not sketch_from_times([1, 2], [3, 3], 1, p).counters.any()


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6))
def test_saturation_cap(seed):
    store = gen_instance(seed, 60, 4, 0.7, (1, 60))
    p = make_params(store.n, 2, 10, 0.5, 0.3, seed)
    sks = build_sketches(store, p)
    for sk in sks.values():
        assert sk.counters.max() <= p.cap
    assert merge_sketches(sks.values()).counters.max() <= p.cap


def test_merge_is_order_free_and_matches_union_below_cap():
    store = gen_instance(3, 80, 3, 0.5, (1, 4))
    p = make_params(store.n, 4, 100, 0.05, 0.2, 9)
    sks = build_sketches(store, p)
    ab = merge_sketches([sks[0], sks[1], sks[2]])
    assert ab == merge_sketches([sks[2], sks[0], sks[1]])
    assert ab == merge_sketches([merge_sketches([sks[0], sks[1]]), sks[2]])
    if ab.counters.max() < p.cap:
        users = np.concatenate([store.region(j)[0] for j in range(3)])
        times = np.concatenate([store.region(j)[1] for j in range(3)])
        assert ab == sketch_from_times(users, times, store.scale, p)


def test_merge_rejects_mismatch():
    with pytest.raises(ValidationError):
        merge_sketches([sketch.empty_sketch(params()), sketch.empty_sketch(params(seed=2))])


def test_query_capability_and_k(intro):
    p = make_params(intro.n, 2, 30, 0.5, 0.1)
    sks = build_sketches(intro, p)
    with pytest.raises(CapabilityError):
        query_sketches(sks, RegionQuery((0, 1, 2), 30), p)
    with pytest.raises(ValidationError):
        query_sketches(sks, RegionQuery((0, 1), 31), p)
    est = query_sketches(sks, RegionQuery((0, 1), 30), p)
    assert len(est.per_repetition) == p.repetitions
    assert est.value == sorted(est.per_repetition)[(p.repetitions - 1) // 2]


def test_empty_query_region_gives_zero():
    store = ingest_triplets([(0, 0, 5)], n=4, m=2)
    p = make_params(store.n, 2, 5, 0.5, 0.1)
    assert sketch_query([build_sketches(store, p)[1]], p).value == 0


@given(st.lists(st.integers(0, 31), max_size=50), st.integers(5, 8))
def test_pack_round_trip(values, bits):
    data = sketch.pack_counters(np.array(values, dtype=np.int64), bits)
    assert len(data) == (len(values) * bits + 7) // 8
    assert sketch.unpack_counters(data, len(values), bits).tolist() == values


def test_snapshot_round_trip_and_merge(tmp_path):
    store = gen_instance(8, 50, 4, 0.5, (1, 20))
    p = make_params(store.n, 3, 25, 0.2, 0.1, 4)
    sks = build_sketches(store, p)
    blob = sketch.dumps(sks, p)
    again, p2 = sketch.loads(blob)
    assert p2 == p and again == sks
    assert sketch.dumps(again, p2) == blob
    # the two halves of every region, saved separately, merge back on load
    left = ingest_triplets([(t.user, t.region, t.time) for t in store.triplets() if t.user < 25], n=50, m=4)
    right = ingest_triplets([(t.user, t.region, t.time) for t in store.triplets() if t.user >= 25], n=50, m=4)
    sketch.save_sketches(build_sketches(left, p), p, tmp_path / "a.skt")
    sketch.save_sketches(build_sketches(right, p), p, tmp_path / "b.skt")
    merged, _ = sketch.load_sketches([tmp_path / "a.skt", tmp_path / "b.skt"])
    for j in range(4):
        assert merged[j] == merge_sketches([build_sketches(left, p)[j], build_sketches(right, p)[j]])


def test_snapshot_header_mismatch(tmp_path):
    store = gen_instance(8, 20, 2, 0.5)
    for name, seed in (("a", 1), ("b", 2)):
        p = make_params(store.n, 2, 10, 0.2, 0.1, seed)
        sketch.save_sketches(build_sketches(store, p), p, tmp_path / name)
    with pytest.raises(ValidationError, match="not mergeable"):
        sketch.load_sketches([tmp_path / "a", tmp_path / "b"])


def test_snapshot_corruption():
    p = params()
    blob = sketch.dumps({0: sketch.empty_sketch(p)}, p)
    for bad in (blob[:-1], blob + b"\0", b"x" * 8 + blob[8:], blob[:20]):
        with pytest.raises(ValidationError):
            sketch.loads(bad)


def test_documented_examples():
    assert make_params(1000, 2, 10, 0.5, 0.1).levels == 10
    p = make_params(1000, 4, 10, 0.25, 0.1, repetitions=5)
    assert (p.cap, p.threshold, p.counter_bits) == (16, 12, 5)
    assert sketch_size_bits(p) == 5 * 10 * 4 * 5 == 1000
    assert sketch_size_bits(make_params(1000, 4, 10, 0.125, 0.1, repetitions=5)) == 2000
    with pytest.raises(ValidationError):
        make_params(1000, 4, 10, 0.25, 0.1, repetitions=0)
    assert tail(12, 10) == 2 and tail(1, 10) == 0 and tail(0, 10) == 9
    assert increments(np.array([30]), 1, make_params(100, 2, 100, 0.5, 0.1)).tolist() == [1]
    assert increments(np.array([100]), 1, make_params(100, 2, 100, 0.5, 0.1)).tolist() == [4]


def test_merge_identity_and_saturation():
    p = make_params(1000, 4, 10, 0.25, 0.1, repetitions=2)
    a = sketch.empty_sketch(p)
    b = sketch.empty_sketch(p)
    a.counters[0, 0, 0], b.counters[0, 0, 0] = 10, 9
    a.counters[1, 2, 3] = 5
    assert merge_sketches([a, sketch.empty_sketch(p)]) == a
    merged = merge_sketches([a, b])
    assert merged.counters[0, 0, 0] == 16 and merged.counters[1, 2, 3] == 5
    assert merge_sketches([b, a]) == merged


def test_all_zero_query_is_zero():
    p = params()
    assert sketch_query([sketch.empty_sketch(p)] * 3, p).value == 0


def test_per_repetition_values_are_powers_of_two():
    store = gen_instance(2, 100, 3, 0.5, (1, 40))
    p = make_params(store.n, 3, 30, 0.2, 0.1, 1)
    est = query_sketches(build_sketches(store, p), RegionQuery((0, 1, 2), 30), p)
    for v in est.per_repetition:
        assert v == 0 or (v & (v - 1) == 0 and v <= 2 ** (p.levels - 1))
