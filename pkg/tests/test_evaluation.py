from __future__ import annotations

import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from planmap import evaluation as ev
from planmap.errors import DegenerateCovariance, InvalidFoldCount
from planmap.hints import DEFAULT, parse_bits
from planmap.mapping import MappingParams
from planmap.store import ReferenceStore

from .conftest import make_triple


@pytest.fixture(scope="module")
def facts(small_workload, small_db):
    return ev.collect_facts(small_workload, small_db)


def test_speedup_is_from_sums():
    assert ev.speedup_pct(200.0, 150.0) == 25.0
    assert ev.speedup_pct(100.0, 150.0) == -50.0


@settings(max_examples=60)
@given(st.integers(2, 200), st.integers(0, 1000), st.data())
def test_folds_partition(n, seed, data):
    k = data.draw(st.integers(2, n))
    folds = ev.fold_assignment(n, k, seed)
    assert len(folds) == k
    assert sorted(i for f in folds for i in f) == list(range(n))
    sizes = [len(f) for f in folds]
    assert max(sizes) - min(sizes) <= 1


def test_folds_are_seeded():
    assert ev.fold_assignment(50, 10, 1) == ev.fold_assignment(50, 10, 1)
    assert ev.fold_assignment(50, 10, 1) != ev.fold_assignment(50, 10, 2)


@pytest.mark.parametrize("n,k", [(10, 1), (10, 0), (5, 6)])
def test_bad_fold_counts(n, k):
    with pytest.raises(InvalidFoldCount):
        ev.fold_assignment(n, k, 0)


@settings(max_examples=60)
@given(st.lists(st.floats(1, 1e6), min_size=10, max_size=300))
def test_bands_cover_every_query(default):
    chosen = [d * 0.9 for d in default]
    bands = ev.percentile_bands(default, chosen)
    assert len(bands) == 10
    n = len(default)
    sizes = [n // 10 + (1 if i < n % 10 else 0) for i in range(10)]
    total = sum(b.mean_default_ms * s for b, s in zip(bands, sizes))
    assert total == pytest.approx(sum(default), rel=1e-9)
    assert [b.upper_bound for b in bands] == [pytest.approx((i + 1) / 10) for i in range(10)]
    means = [b.mean_default_ms for b in bands]
    assert means == sorted(means)
    assert all(b.boost_pct == pytest.approx(10.0) for b in bands)


def test_frequency_table():
    hints = [parse_bits(b) for b in ["0000100", "0000000", "0000100", "1000000", "0000000", "0000100"]]
    table = ev.frequency_table(hints)
    assert table == [("0000100", 3), ("0000000", 2), ("1000000", 1)]
    assert sum(c for _, c in table) == len(hints)


def test_oracle_policy_reaches_max_achievable(facts, small_db):
    res = ev.crossval(facts, small_db, folds=5, policy="oracle")
    s = res.summary
    assert s["total_speedup_pct"] == pytest.approx(s["max_achievable_speedup_pct"], rel=1e-12)
    assert all(o.chosen_ms == o.oracle_ms for o in res.outcomes)


def test_summary_schema_and_consistency(facts, small_db):
    res = ev.crossval(facts, small_db, folds=5)
    assert tuple(res.summary) == ev.SUMMARY_FIELDS
    assert len(res.outcomes) == len(facts)
    assert sorted(o.query_id for o in res.outcomes) == sorted(f.query_id for f in facts)
    s = res.summary
    assert s["faster_pct"] + s["slower_pct"] + s["unchanged_pct"] == pytest.approx(100.0)
    assert s["total_speedup_pct"] <= s["max_achievable_speedup_pct"] + 1e-9
    assert len(res.bands) == 10
    for o in res.outcomes:
        if o.unchanged:
            assert o.category == "unchanged"
        if not o.decision.accepted:
            assert o.chosen_hints == DEFAULT and o.chosen_ms == o.default_ms


def test_crossval_is_repeatable(facts, small_db):
    a = ev.crossval(facts, small_db, folds=5, seed=3)
    b = ev.crossval(facts, small_db, folds=5, seed=3)
    assert a.folds == b.folds and a.summary == b.summary


def test_timeouts_are_counted_and_capped(facts, small_db):
    cap = float(np.median([f.default_ms for f in facts]))
    res = ev.crossval(facts, small_db, folds=5, timeout_ms=cap)
    assert res.n_timeouts == sum(o.chosen_ms > cap for o in res.outcomes) > 0
    assert all(f.total_chosen_ms <= cap * (f.n_faster + f.n_slower + f.n_unchanged) for f in res.folds)


def test_levenshtein_crossval_runs(facts, small_db):
    res = ev.crossval(facts, small_db, folds=3, metric="levenshtein")
    assert res.variant["metric"] == "levenshtein" and len(res.outcomes) == len(facts)


def test_ablation_rows(facts, small_db):
    rows = ev.ablate(facts, small_db, folds=3)
    assert [(r["metric"], r["consistency"]) for r in rows] == [
        ("levenshtein", "off"), ("embedding", "off"), ("levenshtein", "on"), ("embedding", "on")]
    assert all(set(r) == set(ev.ABLATION_FIELDS) for r in rows)
    direct = ev.crossval(facts, small_db, folds=3, params=MappingParams())
    assert rows[3]["total_speedup_pct"] == direct.summary["total_speedup_pct"]


# -- PCA ---------------------------------------------------------------------------

@pytest.mark.parametrize("seed", range(50))
def test_pca_matches_dense_eigensolver(seed):
    x = np.random.default_rng(seed).standard_normal((50, 8))
    comps, lams, proj = ev.principal_components(x)
    w, v = np.linalg.eigh(np.cov(x.T))
    for i in range(2):
        assert abs(comps[i] @ v[:, -1 - i]) > 0.999
        assert lams[i] == pytest.approx(w[-1 - i], rel=1e-6)
    assert proj[:, 0].var() >= proj[:, 1].var()


def test_pca_axis_aligned_points_are_recovered():
    # centred, uncorrelated cloud with more spread along the first axis
    x = np.array([[5.0, 0.0], [-5.0, 0.0], [0.0, 1.0], [0.0, -1.0], [3.0, 0.0], [-3.0, 0.0]])
    comps, _, proj = ev.principal_components(x)
    assert np.allclose(comps, np.eye(2), atol=1e-5)
    assert np.allclose(proj, x, atol=1e-4)


def test_sign_convention():
    x = np.random.default_rng(1).standard_normal((30, 4))
    comps, _, _ = ev.principal_components(x)
    for c in comps:
        assert c[np.flatnonzero(np.abs(c) > 1e-12)[0]] > 0


def test_rank_one_warns_and_emits_zero_pc2():
    x = np.outer(np.arange(10.0), [1.0, 2.0, 0.5])
    with pytest.warns(DegenerateCovariance):
        comps, lams, proj = ev.principal_components(x)
    assert lams[1] == 0.0 and np.all(proj[:, 1] == 0.0)


def test_pca_rows(tmp_path):
    store = ReferenceStore()
    rng = np.random.default_rng(2)
    for i in range(12):
        store.insert(make_triple(f"t{i % 3:02d}-{i:05d}", rng.normal(size=6), "0000000"))
    rows = ev.pca_rows(store)
    assert [r[0] for r in rows] == [t.query_id for t in store]
    assert {r[1] for r in rows} == {"t00", "t01", "t02"}
    pc1 = np.array([r[2] for r in rows])
    pc2 = np.array([r[3] for r in rows])
    assert pc1.var() >= pc2.var()


def test_pca_rows_needs_three():
    store = ReferenceStore()
    store.insert(make_triple("a", [0.0, 1.0], "0000000"))
    with pytest.raises(ValueError):
        ev.pca_rows(store)


def test_identical_points_warn_twice():
    store = ReferenceStore()
    for i in range(4):
        store.insert(make_triple(f"q{i}", [1.0, 1.0], "0000000"))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        rows = ev.pca_rows(store)
    assert sum(issubclass(w.category, DegenerateCovariance) for w in caught) == 2
    assert all(r[2] == 0.0 and r[3] == 0.0 for r in rows)
