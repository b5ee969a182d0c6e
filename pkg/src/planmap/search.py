"""Exhaustive hint search with fastest-so-far timeouts and a plan-latency cache.

The default configuration runs first without a timeout and seeds both the
threshold ``t_min`` and the cache. Every other hint set is planned; a plan seen
before reuses its latency, a new plan runs under the current ``t_min`` and is
abandoned if it exceeds it. Plans that were abandoned once are remembered, so
they are never executed twice.
"""
from __future__ import annotations

import random
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Literal, Protocol

from .embedding import EmbeddingProvider, embed_text
from .errors import ExecutorFailure, PlannerFailure, PlanningImpossible
from .hints import DEFAULT, HintSet, canonicalize, enumerate_all, format_bits, parse_bits
from .plan import ExecutionPlan, PlanFingerprint, fingerprint, render_plan_text
from .store import ReferenceTriple

OutcomeKind = Literal["default_baseline", "executed", "cached", "timed_out", "infeasible"]


class Planner(Protocol):
    def plan(self, query: Any, hints: HintSet) -> ExecutionPlan: ...


class Executor(Protocol):
    def execute(self, query: Any, hints: HintSet, timeout_ms: float | None = None) -> Any: ...


@dataclass(frozen=True)
class Outcome:
    kind: OutcomeKind
    fingerprint: PlanFingerprint | None = None
    latency_ms: float | None = None   # measured or reused latency
    bound_ms: float | None = None     # timeout the execution ran under
    executed: bool = False            # whether this hint set triggered a real execution


@dataclass
class SearchResult:
    t_min: float
    best_hints: HintSet
    best_fingerprint: PlanFingerprint
    baseline_ms: float
    cache: dict[PlanFingerprint, float]
    outcomes: dict[str, Outcome]
    executions: int
    # (bits, t_min after the event), in completion order
    timeline: list[tuple[str, float]] = field(default_factory=list)

    def kinds(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for o in self.outcomes.values():
            out[o.kind] = out.get(o.kind, 0) + 1
        return out


def _is_timeout(value: Any) -> bool:
    return not isinstance(value, (int, float))


class _State:
    """Shared search state; every mutation happens under ``lock``."""

    def __init__(self, baseline: float, fp0: PlanFingerprint):
        self.lock = threading.Lock()
        self.t_min = baseline
        self.cache: dict[PlanFingerprint, float] = {fp0: baseline}
        self.pruned: set[PlanFingerprint] = set()
        self.pending: dict[PlanFingerprint, threading.Event] = {}
        self.outcomes: dict[str, Outcome] = {
            format_bits(DEFAULT): Outcome("default_baseline", fp0, baseline, None, True)
        }
        self.executions = 1
        self.timeline: list[tuple[str, float]] = [(format_bits(DEFAULT), baseline)]

    def record(self, h: HintSet, outcome: Outcome) -> None:
        bits = format_bits(h)
        self.outcomes[bits] = outcome
        if outcome.latency_ms is not None and outcome.kind != "timed_out":
            self.t_min = min(self.t_min, outcome.latency_ms)
        self.timeline.append((bits, self.t_min))


def _plan(planner: Planner, query: Any, h: HintSet, state: _State) -> PlanFingerprint | None:
    try:
        return fingerprint(planner.plan(query, h))
    except PlanningImpossible:
        return None
    except Exception as exc:
        raise PlannerFailure(f"planner failed for {format_bits(h)}: {exc}", dict(state.outcomes), exc) from exc


def _execute(executor: Executor, query: Any, h: HintSet, bound: float | None, state: _State) -> Any:
    try:
        return executor.execute(query, h, timeout_ms=bound)
    except Exception as exc:
        raise ExecutorFailure(f"executor failed for {format_bits(h)}: {exc}", dict(state.outcomes), exc) from exc


def _visit_sequential(query: Any, h: HintSet, planner: Planner, executor: Executor, state: _State) -> None:
    fp = _plan(planner, query, h, state)
    if fp is None:
        state.record(h, Outcome("infeasible"))
    elif fp in state.cache:
        state.record(h, Outcome("cached", fp, state.cache[fp]))
    elif fp in state.pruned:
        state.record(h, Outcome("timed_out", fp))
    else:
        bound = state.t_min
        state.executions += 1
        result = _execute(executor, query, h, bound, state)
        if _is_timeout(result):
            state.pruned.add(fp)
            state.record(h, Outcome("timed_out", fp, None, bound, True))
        else:
            state.cache[fp] = float(result)
            state.record(h, Outcome("executed", fp, float(result), bound, True))


def _visit_threaded(query: Any, h: HintSet, planner: Planner, executor: Executor, state: _State) -> None:
    fp = _plan(planner, query, h, state)
    while True:
        with state.lock:
            if fp is None:
                state.record(h, Outcome("infeasible"))
                return
            if fp in state.cache:
                state.record(h, Outcome("cached", fp, state.cache[fp]))
                return
            if fp in state.pruned:
                state.record(h, Outcome("timed_out", fp))
                return
            waiting = state.pending.get(fp)
            if waiting is None:
                done = threading.Event()
                state.pending[fp] = done
                bound = state.t_min
                state.executions += 1
                break
        # another worker is running this plan; reuse its result
        waiting.wait()
    try:
        result = _execute(executor, query, h, bound, state)
        with state.lock:
            if _is_timeout(result):
                state.pruned.add(fp)
                state.record(h, Outcome("timed_out", fp, None, bound, True))
            else:
                state.cache[fp] = float(result)
                state.record(h, Outcome("executed", fp, float(result), bound, True))
    finally:
        with state.lock:
            del state.pending[fp]
        done.set()


@dataclass
class _Job:
    h: HintSet
    fp: PlanFingerprint
    start: float
    latency: float
    bound_at_start: float
    workers: list[int]
    waiters: list[HintSet]


def _run_simulated(query: Any, todo: list[HintSet], planner: Planner, executor: Executor,
                   state: _State, workers: int, rng: random.Random) -> None:
    """Virtual-clock schedule: executions take their true latency and are killed
    the moment their elapsed time exceeds the live ``t_min``."""
    queue = list(todo)
    rng.shuffle(queue)
    ready = {w: rng.uniform(0.0, state.t_min) for w in range(workers)}  # worker -> time it becomes idle
    jobs: dict[PlanFingerprint, _Job] = {}
    now = 0.0

    def dispatch(w: int) -> None:
        while queue:
            h = queue.pop()
            fp = _plan(planner, query, h, state)
            if fp is None:
                state.record(h, Outcome("infeasible"))
            elif fp in state.cache:
                state.record(h, Outcome("cached", fp, state.cache[fp]))
            elif fp in state.pruned:
                state.record(h, Outcome("timed_out", fp))
            elif fp in jobs:
                jobs[fp].waiters.append(h)
                jobs[fp].workers.append(w)
                return
            else:
                latency = _execute(executor, query, h, None, state)
                state.executions += 1
                jobs[fp] = _Job(h, fp, now, float(latency), state.t_min, [w], [])
                return
        ready.pop(w, None)

    while queue or jobs:
        for w in sorted(w for w, t in ready.items() if t is not None and t <= now):
            ready[w] = None  # busy until its job finishes
            dispatch(w)
        if not queue and not jobs:
            break
        # next event: a job finishing, a job hitting the live threshold, or a worker waking up
        deadlines = [(max(now, j.start + min(j.latency, state.t_min)), j.latency > state.t_min, str(fp), fp)
                     for fp, j in jobs.items()]
        wakeups = [t for t in ready.values() if t is not None and t > now] if queue else []
        t_next = min([d[0] for d in deadlines] + wakeups)
        now = t_next
        for _, _, _, fp in sorted(d for d in deadlines if d[0] <= now):
            job = jobs[fp]
            # completion check against the live threshold (completions earlier in this batch count)
            if job.latency > state.t_min:
                state.pruned.add(fp)
                state.record(job.h, Outcome("timed_out", fp, None, job.bound_at_start, True))
                for h in job.waiters:
                    state.record(h, Outcome("timed_out", fp))
            else:
                state.cache[fp] = job.latency
                state.record(job.h, Outcome("executed", fp, job.latency, job.bound_at_start, True))
                for h in job.waiters:
                    state.record(h, Outcome("cached", fp, job.latency))
            for w in job.workers:
                ready[w] = now
            del jobs[fp]


def adaptive_search(
    query: Any,
    planner: Planner,
    executor: Executor,
    workers: int = 8,
    mode: Literal["sequential", "parallel", "simulated"] = "sequential",
    schedule_seed: int | None = None,
) -> SearchResult:
    """Scan all 128 hint sets and return the fastest configuration.

    ``sequential`` visits hint sets in ascending bitstring order. ``parallel``
    runs them on a thread pool, each execution bounded by ``t_min`` at dispatch.
    ``simulated`` replays a seeded random schedule of ``workers`` workers on a
    virtual clock with live timeout tightening.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    todo = enumerate_all()[1:]
    stub = _State(0.0, PlanFingerprint(""))
    fp0 = _plan(planner, query, DEFAULT, stub)
    if fp0 is None:
        raise PlannerFailure("default configuration cannot be planned", {}, None)
    baseline = _execute(executor, query, DEFAULT, None, stub)
    if _is_timeout(baseline):
        raise ExecutorFailure("default configuration timed out without a bound", {}, None)
    state = _State(float(baseline), fp0)

    if mode == "sequential" or (mode == "parallel" and workers == 1):
        for h in todo:
            _visit_sequential(query, h, planner, executor, state)
    elif mode == "parallel":
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_visit_threaded, query, h, planner, executor, state) for h in todo]
            for f in futures:
                f.result()
    elif mode == "simulated":
        _run_simulated(query, todo, planner, executor, state, workers, random.Random(schedule_seed))
    else:
        raise ValueError(f"unknown mode {mode!r}")

    result = SearchResult(
        t_min=state.t_min,
        best_hints=DEFAULT,
        best_fingerprint=fp0,
        baseline_ms=float(baseline),
        cache=dict(state.cache),
        outcomes=dict(state.outcomes),
        executions=state.executions,
        timeline=list(state.timeline),
    )
    result.best_hints, result.best_fingerprint = extract_best(result)
    return result


def extract_best(result: SearchResult) -> tuple[HintSet, PlanFingerprint]:
    """Canonical hint set for the fastest plan.

    If several plans tie at ``t_min``, the plan reached first in ascending
    bitstring order wins; the canonical rule then picks among its hint sets.
    """
    ordered = [(h, result.outcomes.get(format_bits(h))) for h in enumerate_all()]
    ordered = [(h, o.fingerprint) for h, o in ordered if o is not None and o.fingerprint is not None]
    winner = next((fp for _, fp in ordered if result.cache.get(fp) == result.t_min), None)
    if winner is None:
        raise ValueError("search result has no plan at t_min")
    producers = [h for h, fp in ordered if fp == winner]
    return canonicalize(producers), winner


def make_reference_triple(query: Any, result: SearchResult, planner: Planner,
                          provider: EmbeddingProvider, query_id: str | None = None) -> ReferenceTriple:
    default_plan = planner.plan(query, DEFAULT)
    d_vec = embed_text(provider, render_plan_text(default_plan))
    if result.best_hints.is_default:
        o_vec, t_opt = d_vec, result.baseline_ms
    else:
        o_vec = embed_text(provider, render_plan_text(planner.plan(query, result.best_hints)))
        t_opt = result.t_min
    qid = query_id if query_id is not None else getattr(query, "query_id", str(query))
    return ReferenceTriple(qid, d_vec, fingerprint(default_plan), result.best_hints, o_vec, result.baseline_ms, t_opt)
