import pytest

from clav.bench import (
    gen_sized_instance,
    gen_skewed_instance,
    lambda_grid,
    run_config,
    run_tradeoff,
    strata,
    workload,
)


@pytest.fixture
def store():
    return gen_sized_instance(0, 400, [10, 12, 40, 45, 100, 110, 300, 320])


def test_sized_instance(store):
    assert store.region_sizes().tolist() == [10, 12, 40, 45, 100, 110, 300, 320]


def test_skewed_instance_sizes_decrease():
    sizes = gen_skewed_instance(1, 500, 6, 1000).region_sizes().tolist()
    assert sizes == sorted(sizes, reverse=True)
    assert abs(sum(sizes) - 1000) <= 6


def test_grid_has_five_points(store):
    assert lambda_grid(store, 4) == [1, 12, 45, 110, store.N + 1]
    assert [len(g) for g in strata(store, 4)] == [2, 2, 2, 2]


def test_workload_takes_one_region_per_stratum(store):
    groups = [set(g.tolist()) for g in strata(store, 4)]
    for q in workload(store, 50, 4, 3):
        assert q.r == 4
        assert all(len(groups[i] & set(q.regions)) == 1 for i in range(4))
    assert workload(store, 5, 4, 3) == workload(store, 5, 4, 3)


def test_tradeoff_rows(store):
    qs = workload(store, 30, 4, 1)
    rows = run_tradeoff(store, lambda_grid(store, 4), qs, 4, repeats=1)
    assert all(r.agrees_with_oracle for r in rows)
    stored = [r.stored_tuples for r in rows]
    assert stored == sorted(stored, reverse=True) and stored[-1] == 0
    assert all(r.stored_tuples <= r.tuple_bound for r in rows)
    assert [r.large_regions for r in rows] == [8, 6, 4, 2, 0]


def test_budget_error_keeps_other_rows(store):
    rows = run_tradeoff(store, [1, store.N + 1], workload(store, 5, 4, 1), 4, repeats=1, max_tuples=1000)
    assert rows[0].error and rows[0].stored_tuples is None
    assert rows[1].error is None and rows[1].stored_tuples == 0


def test_config_power_law():
    rows = run_config({"n": 200, "m": 6, "triplets": 600, "r": 2, "queries": 10, "repeats": 1})
    assert len(rows) == 3 and all(r.agrees_with_oracle for r in rows)


def test_query_arity_follows_rmax(tmp_path):
    path = tmp_path / "v.txt"
    path.write_text("u1,r1,20\nu2,r1,15\nu1,r2,15\nu3,r2,30\nu2,r3,20\n")
    rows = run_config({"input": str(path), "rmax": 2, "lambdas": [1, 3, 6], "queries": 20})
    assert [r.agrees_with_oracle for r in rows] == [True, True, True]
