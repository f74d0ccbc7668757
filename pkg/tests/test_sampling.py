import math
from collections import Counter
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from clav import kernels
from clav.errors import ValidationError
from clav.model import RegionQuery, gen_instance, ingest_triplets, oracle_count
from clav.sampling import (
    SamplingConfig,
    draw_sample,
    estimate_count,
    estimate_with_guarantee,
    sample_size,
    triplet_weights,
)


@pytest.mark.parametrize("eps,delta,r,want", [
    (0.1, 0.05, 2, 738),    # ceil(200 * ln 40)
    (0.2, 0.1, 3, 338),     # ceil(112.5 * ln 20)
    (0.5, 0.5, 1, 3),       # ceil(2 * ln 4)
])
def test_sample_size(eps, delta, r, want):
    assert sample_size(eps, delta, r) == want


@pytest.mark.parametrize("eps,delta", [(0, 0.1), (1, 0.1), (0.1, 0), (0.1, 1)])
def test_config_validation(eps, delta):
    with pytest.raises(ValidationError):
        SamplingConfig(eps, delta)


def test_intro_exact_expectation(intro):
    q = RegionQuery((0, 1), 30)
    weights = triplet_weights(intro, q)
    # u1 twice at 1/2, u2 fails, u3 once at 1
    assert sorted(weights) == [0, Fraction(1, 2), Fraction(1, 2), 1]
    n_q = intro.query_triplet_count(q.regions)
    assert n_q * sum(weights) / len(weights) == oracle_count(intro, q) == 2


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 4), st.integers(1, 150))
def test_expectation_equals_answer(seed, r, k):
    store = gen_instance(seed, 15, 5, 0.5, (1, 50))
    q = RegionQuery(tuple(range(r)), k)
    weights = triplet_weights(store, q)
    if weights:
        assert sum(weights) == oracle_count(store, q)
    assert all(w == 0 or (w.numerator == 1 and 1 <= w.denominator <= r) for w in weights)


def test_kernel_contribution_matches_weights(intro):
    q = RegionQuery((0, 1), 30)
    weights = triplet_weights(intro, q)
    idx = 0
    for j in q.regions:
        users, times = intro.region(j)
        for u, t in zip(users.tolist(), times.tolist()):
            hist = kernels.sample_hits(np.array([u]), np.array([j]), np.array([t]), np.array(q.regions),
                                       intro.keys, intro.times, intro.m, intro.k_units(q.k))
            got = sum(Fraction(int(h), c) for c, h in enumerate(hist) if c)
            assert got == weights[idx]
            idx += 1


def test_deterministic(intro):
    q = RegionQuery((0, 1), 30)
    a = estimate_count(intro, q, SamplingConfig(0.1, 0.05, seed=7))
    b = estimate_count(intro, q, SamplingConfig(0.1, 0.05, seed=7))
    assert a == b and a.s_used == 738 and a.n_q_triplets == 4


def test_empty_regions():
    store = ingest_triplets([(0, 0, 1)], n=1, m=3)
    est = estimate_count(store, RegionQuery((1, 2), 1), SamplingConfig(0.1, 0.1))
    assert est.value == 0 and est.s_used == 0


def test_explicit_sample_size(intro):
    est = estimate_count(intro, RegionQuery((0, 1), 30), SamplingConfig(0.1, 0.1, 1, override_s=5))
    assert est.s_used == 5
    assert (est.value * 5 / 4) * 2 == int(est.value * 5 / 4 * 2)


def test_draw_is_proportional_to_region_size():
    store = ingest_triplets([(u, 0, 1) for u in range(30)] + [(u, 1, 1) for u in range(10)])
    users, regions, _ = draw_sample(store, (0, 1), 40000, seed=3)
    share = np.mean(regions == 0)
    assert abs(share - 0.75) < 4 * math.sqrt(0.75 * 0.25 / 40000)
    freq = Counter(zip(users.tolist(), regions.tolist()))
    assert len(freq) == 40
    expected = 40000 / 40
    chi2 = sum((c - expected) ** 2 / expected for c in freq.values())
    assert chi2 < 80  # 39 dof, p ~ 1e-4


def test_unbiased_small_instance():
    store = gen_instance(11, 40, 6, 0.5, (1, 30))
    q = RegionQuery((0, 2, 5), 40)
    truth = oracle_count(store, q)
    vals = np.array([float(estimate_count(store, q, SamplingConfig(0.5, 0.5, seed, override_s=8)).value)
                     for seed in range(3000)])
    se = vals.std(ddof=1) / math.sqrt(len(vals))
    assert abs(vals.mean() - truth) <= 4 * se


def test_guarantee_wrapper(intro):
    est = estimate_with_guarantee(intro, RegionQuery((0, 1), 30), 0.3, 0.2, seed=1)
    assert est.s_used == sample_size(0.3, 0.2, 2)
    # every contribution lies in [0, 1], so the estimate lies in [0, N_Q]
    assert 0 <= est.value <= est.n_q_triplets
