"""End-to-end control flow: plan mapping first, exhaustive search as fallback.

Fallback searches feed new reference triples back into the store, so later
queries can take the fast path.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Any, Iterable, Literal

from .embedding import EmbeddingProvider, ProviderConfig
from .hints import DEFAULT, HintSet, format_bits
from .mapping import MappingDecision, MappingParams, map_plan
from .search import Executor, Planner, adaptive_search, make_reference_triple
from .store import ReferenceStore

log = logging.getLogger(__name__)

PathTaken = Literal["fast", "fallback", "default"]


@dataclass(frozen=True)
class PipelineConfig:
    params: MappingParams = MappingParams()
    mode: Literal["full", "map_only"] = "full"
    timeout_ms: float = 450_000.0
    store_path: Path | None = None
    provider: ProviderConfig = ProviderConfig()
    workers: int = 8
    search_mode: Literal["sequential", "parallel", "simulated"] = "sequential"

    def __post_init__(self) -> None:
        if self.timeout_ms <= 0:
            raise ValueError("timeout_ms must be positive")
        if self.mode not in ("full", "map_only"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass(frozen=True)
class QueryReport:
    query_id: str
    path_taken: PathTaken
    hints_applied: HintSet
    latency_ms: float
    default_latency_ms: float | None
    triple_added: bool
    mapping_decision: MappingDecision
    timed_out: bool = False

    def __post_init__(self) -> None:
        if self.path_taken == "fast" and not self.mapping_decision.accepted:
            raise ValueError("fast path requires an accepted mapping decision")

    def to_record(self) -> dict[str, Any]:
        return {
            "query_id": self.query_id,
            "path_taken": self.path_taken,
            "hints_applied": format_bits(self.hints_applied),
            "latency_ms": self.latency_ms,
            "default_latency_ms": self.default_latency_ms,
            "triple_added": self.triple_added,
            "timed_out": self.timed_out,
            "mapping_decision": self.mapping_decision.to_record(),
        }


def _run(executor: Executor, query: Any, hints: HintSet, timeout_ms: float) -> tuple[float, bool]:
    result = executor.execute(query, hints, timeout_ms=timeout_ms)
    if isinstance(result, (int, float)):
        return float(result), False
    return float(timeout_ms), True


def process_query(query: Any, config: PipelineConfig, store: ReferenceStore, planner: Planner,
                  executor: Executor, provider: EmbeddingProvider) -> QueryReport:
    qid = getattr(query, "query_id", str(query))
    default_plan = planner.plan(query, DEFAULT)
    if len(store):
        decision = map_plan(default_plan, partial(planner.plan, query), provider, store, config.params)
    else:
        decision = MappingDecision(reason="reference store is empty")

    if decision.accepted:
        latency, timed_out = _run(executor, query, decision.candidate, config.timeout_ms)
        return QueryReport(qid, "fast", decision.candidate, latency, None, False, decision, timed_out)

    if config.mode == "full":
        result = adaptive_search(query, planner, executor, workers=config.workers, mode=config.search_mode)
        store.insert(make_reference_triple(query, result, planner, provider, qid))
        # the search already measured the winner; no re-execution
        return QueryReport(qid, "fallback", result.best_hints, result.t_min, result.baseline_ms, True, decision)

    latency, timed_out = _run(executor, query, DEFAULT, config.timeout_ms)
    return QueryReport(qid, "default", DEFAULT, latency, latency, False, decision, timed_out)


@dataclass
class WorkloadRun:
    reports: list[QueryReport]
    errors: list[dict[str, str]] = field(default_factory=list)

    def summary(self) -> dict[str, Any]:
        n = len(self.reports)
        paths = {p: sum(r.path_taken == p for r in self.reports) for p in ("fast", "fallback", "default")}
        return {
            "queries": n,
            "errors": len(self.errors),
            **{f"{p}_count": c for p, c in paths.items()},
            "fallback_fraction": paths["fallback"] / n if n else 0.0,
            "triples_added": sum(r.triple_added for r in self.reports),
            "timeouts": sum(r.timed_out for r in self.reports),
            "total_latency_ms": sum(r.latency_ms for r in self.reports),
        }


def run_workload(queries: Iterable[Any], config: PipelineConfig, store: ReferenceStore, planner: Planner,
                 executor: Executor, provider: EmbeddingProvider) -> WorkloadRun:
    """Process queries in order; fallback triples are visible to every later query."""
    run = WorkloadRun([])
    for q in queries:
        try:
            run.reports.append(process_query(q, config, store, planner, executor, provider))
        except Exception as exc:  # one bad query must not stop the workload
            qid = getattr(q, "query_id", str(q))
            log.warning("query %s failed: %s", qid, exc)
            run.errors.append({"query_id": qid, "error": f"{type(exc).__name__}: {exc}"})
    return run
