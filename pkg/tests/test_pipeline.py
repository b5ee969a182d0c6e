from __future__ import annotations

import copy

import pytest

from planmap.embedding import LocalHashingProvider
from planmap.hints import DEFAULT, parse_bits
from planmap.mapping import MappingDecision, MappingParams
from planmap.pipeline import PipelineConfig, QueryReport, process_query, run_workload
from planmap.plan import render_plan_text
from planmap.store import ReferenceStore

from .conftest import make_triple

PROVIDER = LocalHashingProvider()


def test_config_validation():
    with pytest.raises(ValueError):
        PipelineConfig(timeout_ms=0)
    with pytest.raises(ValueError):
        PipelineConfig(mode="turbo")
    with pytest.raises(ValueError):
        PipelineConfig(workers=0)


def test_fast_report_requires_acceptance():
    with pytest.raises(ValueError):
        QueryReport("q", "fast", DEFAULT, 1.0, None, False, MappingDecision())


def test_empty_store_full_mode_falls_back(small_workload, small_db):
    store = ReferenceStore()
    q = small_workload[0]
    rep = process_query(q, PipelineConfig(), store, small_db, small_db, PROVIDER)
    assert rep.path_taken == "fallback" and rep.triple_added and len(store) == 1
    t, h = small_db.oracle_best(q)
    assert rep.latency_ms == t and rep.hints_applied == h
    assert rep.default_latency_ms == small_db.true_latency(q, DEFAULT)


def test_empty_store_map_only_runs_default(small_workload, small_db):
    store = ReferenceStore()
    q = small_workload[0]
    rep = process_query(q, PipelineConfig(mode="map_only"), store, small_db, small_db, PROVIDER)
    assert rep.path_taken == "default" and len(store) == 0
    assert rep.latency_ms == small_db.true_latency(q, DEFAULT)


def accepting_store(query, db, hints: str) -> ReferenceStore:
    """Store whose neighbourhood around ``query`` unanimously votes ``hints`` with faster optimized plans."""
    h = parse_bits(hints)
    d = PROVIDER.embed(render_plan_text(db.plan(query, DEFAULT)))
    o = PROVIDER.embed(render_plan_text(db.plan(query, h)))
    store = ReferenceStore()
    for i in range(16):
        store.insert(make_triple(f"r{i}", d, h, o_vec=o, t_def=100.0, t_opt=10.0))
    return store


def first_query_with_effective_hint(workload, db):
    for q in workload:
        t, h = db.oracle_best(q)
        if not h.is_default:
            return q, h
    raise AssertionError("workload has no query that benefits from hints")


def test_fast_path_executes_the_candidate(small_workload, small_db):
    q, h = first_query_with_effective_hint(small_workload, small_db)
    store = accepting_store(q, small_db, h.bits)
    before = len(store)
    rep = process_query(q, PipelineConfig(), store, small_db, small_db, PROVIDER)
    assert rep.path_taken == "fast" and rep.hints_applied == h
    assert rep.latency_ms == small_db.true_latency(q, h)  # measured, not a neighbourhood mean
    assert not rep.triple_added and len(store) == before


def test_fast_path_timeout_is_recorded(small_workload, small_db):
    q, h = first_query_with_effective_hint(small_workload, small_db)
    store = accepting_store(q, small_db, h.bits)
    tiny = small_db.true_latency(q, h) / 2
    rep = process_query(q, PipelineConfig(timeout_ms=tiny), store, small_db, small_db, PROVIDER)
    assert rep.path_taken == "fast" and rep.timed_out and rep.latency_ms == tiny


def test_map_only_never_mutates(small_workload, small_db):
    seed = ReferenceStore()
    run_workload(small_workload[:20], PipelineConfig(), seed, small_db, small_db, PROVIDER)
    snapshot = list(seed)
    run = run_workload(small_workload[20:], PipelineConfig(mode="map_only"), seed, small_db, small_db, PROVIDER)
    assert list(seed) == snapshot
    assert run.summary()["triples_added"] == 0 and run.summary()["fallback_count"] == 0


def test_every_fallback_adds_one_triple(small_workload, small_db):
    store = ReferenceStore()
    run = run_workload(small_workload, PipelineConfig(), store, small_db, small_db, PROVIDER)
    s = run.summary()
    assert s["fallback_count"] == s["triples_added"] == len(store)
    assert all(r.triple_added == (r.path_taken == "fallback") for r in run.reports)
    assert s["queries"] == len(small_workload) and not run.errors


def test_duplicates_behave_consistently(small_workload, small_db):
    q = small_workload[0]
    store = ReferenceStore()
    run = run_workload([q] * 6, PipelineConfig(), store, small_db, small_db, PROVIDER)
    paths = [r.path_taken for r in run.reports]
    assert paths[0] == "fallback" and len(store) == 1
    # the stored triple is an exact duplicate, so every later copy decides identically
    assert len(set(paths[1:])) == 1 and paths[1] in ("fast", "default")
    if not store.triples[0].h_star.is_default:
        assert paths[1] == "fast"
        assert {r.hints_applied for r in run.reports} == {store.triples[0].h_star}


def test_replay_fallback_fraction_does_not_increase(small_workload, small_db):
    store = ReferenceStore()
    fractions = []
    for _ in range(3):
        run = run_workload(small_workload, PipelineConfig(), store, small_db, small_db, PROVIDER)
        fractions.append(run.summary()["fallback_fraction"])
    assert fractions[0] > 0
    assert all(b <= a for a, b in zip(fractions, fractions[1:]))


def test_errors_are_recorded_and_workload_continues(small_workload, small_db):
    from planmap.synthetic import SyntheticQuery

    bad = SyntheticQuery("bad", 999, 1.0, (0.5,))
    store = ReferenceStore()
    run = run_workload([small_workload[0], bad, small_workload[1]], PipelineConfig(), store, small_db, small_db,
                       PROVIDER)
    assert [r.query_id for r in run.reports] == [small_workload[0].query_id, small_workload[1].query_id]
    assert run.errors[0]["query_id"] == "bad"


def test_report_record(small_workload, small_db):
    rep = process_query(small_workload[0], PipelineConfig(), ReferenceStore(), small_db, small_db, PROVIDER)
    rec = rep.to_record()
    assert rec["path_taken"] == "fallback" and len(rec["hints_applied"]) == 7
    assert set(rec["mapping_decision"]) == {"candidate", "accepted", "t_bar_default", "t_bar_candidate",
                                            "vote_counts", "reason"}
