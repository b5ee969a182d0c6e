"""Deterministic stand-in DBMS: seeded workloads, hint-aware planning, latency model.

Every query belongs to a template: a fixed join skeleton over 2-8 relations with
per-template cost weights and a planner whose row estimates are biased. The
planner ranks the admissible operators at each slot by estimated cost and takes
the best one that the hint set leaves enabled, so many hint sets collapse onto the
same plan. True latency is the sum of per-node costs computed from true row
counts, times the query's scale.
"""
from __future__ import annotations

import json
import math
import threading
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .errors import InvalidParams, PlanningImpossible
from .hints import HINT_OPERATORS, HintSet, canonicalize, enumerate_all, format_bits
from .plan import JOIN_OPERATORS, SCAN_OPERATORS, ExecutionPlan, PlanFingerprint, PlanNode, fingerprint

RELATIONS = (
    "title", "movie_keyword", "keyword", "cast_info", "name", "movie_companies",
    "company_name", "company_type", "movie_info", "movie_info_idx", "info_type",
    "kind_type", "role_type", "char_name", "aka_name", "aka_title", "movie_link",
    "link_type", "complete_cast", "comp_cast_type", "person_info",
)

# base cost weights per operator; templates jitter these
BASE_WEIGHTS = {
    "SeqScan": 1.0, "IndexScan": 2.5, "IndexOnlyScan": 1.6, "BitmapScan": 1.3,
    "HashJoin": 1.0, "MergeJoin": 1.0, "NestLoop": 1.0,
    "Aggregate": 0.4, "Sort": 0.25, "Materialize": 0.3,
}
MS_PER_UNIT = 6.5e-3  # puts the slowest decile of the reference workload near two minutes

_OP_RANK = {op: i for i, op in enumerate(HINT_OPERATORS)}
_JOIN_MASK = (0, 1, 2)
_SCAN_MASK = (3, 4, 5, 6)


@dataclass(frozen=True)
class GeneratorConfig:
    """Knobs of the synthetic world. Defaults are the shipped calibration."""

    estimation_error: float = 0.05  # std-dev of routine row-estimate bias, decades
    misestimate_prob: float = 0.2   # chance a relation/join is badly underestimated
    misestimate_shift: float = -2.0  # mean bias of a bad estimate, decades
    weight_error: float = 0.05      # std-dev of planner cost-weight bias, natural log
    affinity_noise: float = 0.05    # std-dev of per-slot operator affinity offsets, natural log
    selectivity_spread: float = 0.4  # per-query std-dev around the template's selectivity, decades
    scale_range: tuple[float, float] = (0.5, 4.0)
    noise_sigma: float = 0.0        # multiplicative latency noise (log-normal), off by default


@dataclass(frozen=True)
class QueryTemplate:
    template_id: int
    relations: tuple[str, ...]
    base_rows: tuple[float, ...]
    # nested tuples: an int is a relation index, a pair is a join of two subtrees
    join_tree_shape: Any
    join_factors: tuple[float, ...]          # per join slot (pre-order), true output factor
    join_estimate_bias: tuple[float, ...]    # per join slot, multiplicative
    selectivity_center: tuple[float, ...]    # per relation, log10
    selectivity_estimate_bias: tuple[float, ...]  # per relation, log10
    weight_profile: dict[str, float]         # true per-operator weights
    planner_weights: dict[str, float]        # what the planner believes
    operator_affinity: tuple[dict[str, float], ...]  # per slot (pre-order), log-cost offsets
    top_operators: tuple[str, ...]           # pass-through chain above the join tree

    def to_record(self) -> dict[str, Any]:
        rec = asdict(self)
        rec["join_tree_shape"] = _shape_to_json(self.join_tree_shape)
        return rec

    @classmethod
    def from_record(cls, rec: dict[str, Any]) -> QueryTemplate:
        rec = dict(rec)
        rec["join_tree_shape"] = _shape_from_json(rec["join_tree_shape"])
        for key in ("relations", "base_rows", "join_factors", "join_estimate_bias",
                    "selectivity_center", "selectivity_estimate_bias", "top_operators"):
            rec[key] = tuple(rec[key])
        rec["operator_affinity"] = tuple(dict(a) for a in rec["operator_affinity"])
        return cls(**rec)


def _shape_to_json(shape: Any) -> Any:
    return shape if isinstance(shape, int) else [_shape_to_json(shape[0]), _shape_to_json(shape[1])]


def _shape_from_json(doc: Any) -> Any:
    return doc if isinstance(doc, int) else (_shape_from_json(doc[0]), _shape_from_json(doc[1]))


@dataclass(frozen=True)
class SyntheticQuery:
    query_id: str
    template_id: int
    scale: float
    selectivity: tuple[float, ...]  # per relation, in (0, 1]
    workload_seed: int = 0
    n_templates: int = 16

    def to_record(self) -> dict[str, Any]:
        rec = asdict(self)
        rec["selectivity"] = list(self.selectivity)
        return rec

    @classmethod
    def from_record(cls, rec: dict[str, Any]) -> SyntheticQuery:
        return cls(
            query_id=str(rec["query_id"]),
            template_id=int(rec["template_id"]),
            scale=float(rec["scale"]),
            selectivity=tuple(float(s) for s in rec["selectivity"]),
            workload_seed=int(rec.get("workload_seed", 0)),
            n_templates=int(rec.get("n_templates", 16)),
        )


@dataclass(frozen=True)
class TimedOut:
    bound_ms: float


def _rng(*key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(list(key)))


def _random_shape(rng: np.random.Generator, leaves: list[int]) -> Any:
    if len(leaves) == 1:
        return leaves[0]
    # mostly left-deep, sometimes bushy
    if rng.random() < 0.7:
        cut = len(leaves) - 1
    else:
        cut = int(rng.integers(1, len(leaves)))
    return (_random_shape(rng, leaves[:cut]), _random_shape(rng, leaves[cut:]))


def _count_joins(shape: Any) -> int:
    return 0 if isinstance(shape, int) else 1 + _count_joins(shape[0]) + _count_joins(shape[1])


def _estimate_bias(rng: np.random.Generator, config: GeneratorConfig) -> float:
    # mostly accurate, occasionally a large underestimate (correlated predicates)
    if rng.random() < config.misestimate_prob:
        return rng.normal(config.misestimate_shift, 0.5)
    return rng.normal(0.0, config.estimation_error)


def make_template(seed: int, template_id: int, config: GeneratorConfig = GeneratorConfig()) -> QueryTemplate:
    rng = _rng(seed, 1, template_id)
    n_rel = int(rng.integers(2, 9))
    rel_idx = rng.choice(len(RELATIONS), size=n_rel, replace=False)
    relations = tuple(RELATIONS[i] for i in rel_idx)
    base_rows = tuple(float(10 ** rng.uniform(3.0, 7.0)) for _ in range(n_rel))
    shape = _random_shape(rng, list(range(n_rel)))
    n_join = _count_joins(shape)
    n_slots = n_join + n_rel
    weight_profile = {op: float(w * math.exp(rng.normal(0.0, 0.2))) for op, w in BASE_WEIGHTS.items()}
    planner_weights = {op: float(w * math.exp(rng.normal(0.0, config.weight_error)))
                       for op, w in weight_profile.items()}
    affinity = tuple(
        {op: float(rng.normal(0.0, config.affinity_noise)) for op in HINT_OPERATORS}
        for _ in range(n_slots)
    )
    top = ("Aggregate", "Sort") if rng.random() < 0.3 else ("Aggregate",)
    return QueryTemplate(
        template_id=template_id,
        relations=relations,
        base_rows=base_rows,
        join_tree_shape=shape,
        join_factors=tuple(float(10 ** rng.uniform(-1.3, 0.3)) for _ in range(n_join)),
        join_estimate_bias=tuple(float(10 ** _estimate_bias(rng, config)) for _ in range(n_join)),
        selectivity_center=tuple(float(rng.uniform(-3.5, -0.3)) for _ in range(n_rel)),
        selectivity_estimate_bias=tuple(float(_estimate_bias(rng, config)) for _ in range(n_rel)),
        weight_profile=weight_profile,
        planner_weights=planner_weights,
        operator_affinity=affinity,
        top_operators=top,
    )


def generate_templates(seed: int, n_templates: int = 16, config: GeneratorConfig = GeneratorConfig()) -> list[QueryTemplate]:
    return [make_template(seed, t, config) for t in range(n_templates)]


def generate_workload(seed: int, n_templates: int = 16, n_queries: int = 3133,
                      config: GeneratorConfig = GeneratorConfig(),
                      templates: Sequence[QueryTemplate] | None = None) -> list[SyntheticQuery]:
    if n_templates < 1 or n_queries < n_templates:
        raise InvalidParams(f"need n_templates >= 1 and n_queries >= n_templates, got {n_templates}, {n_queries}")
    templates = list(templates) if templates is not None else generate_templates(seed, n_templates, config)
    rng = _rng(seed, 2)
    # uneven template popularity; every template gets at least one query
    weights = rng.dirichlet(np.full(n_templates, 1.5))
    counts = 1 + rng.multinomial(n_queries - n_templates, weights)
    assignment = np.repeat(np.arange(n_templates), counts)
    rng.shuffle(assignment)
    lo, hi = math.log(config.scale_range[0]), math.log(config.scale_range[1])
    queries = []
    for idx, tid in enumerate(assignment):
        tpl = templates[int(tid)]
        qrng = _rng(seed, 3, idx)
        scale = float(math.exp(qrng.uniform(lo, hi)))
        sel = tuple(
            float(min(1.0, 10 ** (c + qrng.normal(0.0, config.selectivity_spread))))
            for c in tpl.selectivity_center
        )
        queries.append(SyntheticQuery(f"t{int(tid):02d}-{idx:05d}", int(tid), scale, sel, seed, n_templates))
    return queries


def save_workload(queries: Iterable[SyntheticQuery], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for q in queries:
            fh.write(json.dumps(q.to_record(), separators=(",", ":")) + "\n")


def load_workload(path: str | Path) -> list[SyntheticQuery]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(SyntheticQuery.from_record(json.loads(line)))
            except (ValueError, KeyError, TypeError) as exc:
                raise InvalidParams(f"{path}:{line_no}: bad query record: {exc}") from exc
    return out


def save_templates(templates: Iterable[QueryTemplate], path: str | Path) -> None:
    Path(path).write_text(json.dumps([t.to_record() for t in templates], indent=1), encoding="utf-8")


def load_templates(path: str | Path) -> list[QueryTemplate]:
    return [QueryTemplate.from_record(r) for r in json.loads(Path(path).read_text(encoding="utf-8"))]


# -- cost model --------------------------------------------------------------

def _scan_size(op: str, base: float, rows: float) -> float:
    if op == "SeqScan":
        return base
    if op == "IndexScan":
        return 4.0 * rows + 20.0 * math.log2(base)
    if op == "IndexOnlyScan":
        return 2.5 * rows + 0.01 * base + 20.0 * math.log2(base)
    return 1.5 * rows + 0.04 * base  # BitmapScan


def _join_order(op: str, left_est: float, right_est: float) -> bool:
    """True if the planner swaps the skeleton's (left, right) children for ``op``."""
    if op == "HashJoin":
        return right_est > left_est  # build (inner) side is the smaller estimate
    if op == "NestLoop":
        return left_est > right_est  # outer side is the smaller estimate
    return False


def _join_size(op: str, outer: float, inner: float, out: float) -> float:
    if op == "HashJoin":
        return outer + 2.0 * inner + out
    if op == "MergeJoin":
        return 0.35 * (outer * math.log2(outer + 2.0) + inner * math.log2(inner + 2.0)) + out
    return 3.0 * outer * math.log2(inner + 2.0) + out  # NestLoop, index lookups on inner


def _top_size(op: str, rows: float) -> float:
    if op == "Sort":
        return rows * math.log2(rows + 2.0)
    return rows


@dataclass
class _Slot:
    kind: str                 # "join" or "scan"
    relation: int | None
    children: tuple[int, int] | None  # slot indices of skeleton children
    true_rows: float
    est_rows: float
    order: tuple[str, ...] = ()       # operators by ascending estimated cost
    true_cost: dict[str, float] = field(default_factory=dict)
    est_cost: dict[str, float] = field(default_factory=dict)
    swapped: dict[str, bool] = field(default_factory=dict)
    materialize: dict[str, tuple[float, float]] = field(default_factory=dict)  # op -> (true, est) cost


class _QueryModel:
    """Per-query precomputation: slot rankings and true per-operator costs."""

    def __init__(self, tpl: QueryTemplate, q: SyntheticQuery):
        self.tpl = tpl
        self.query = q
        self.slots: list[_Slot] = []
        self._join_counter = 0
        self.root = self._build(tpl.join_tree_shape)
        root_slot = self.slots[self.root]
        self.top_costs = []
        for op in tpl.top_operators:
            w = tpl.weight_profile[op]
            self.top_costs.append((op, w * _top_size(op, root_slot.true_rows),
                                   tpl.planner_weights[op] * _top_size(op, root_slot.est_rows)))

    def _build(self, shape: Any) -> int:
        tpl, q = self.tpl, self.query
        idx = len(self.slots)
        if isinstance(shape, int):
            r = shape
            base = tpl.base_rows[r]
            true_rows = max(1.0, base * q.selectivity[r])
            est_sel = min(1.0, q.selectivity[r] * 10 ** tpl.selectivity_estimate_bias[r])
            est_rows = max(1.0, base * est_sel)
            slot = _Slot("scan", r, None, true_rows, est_rows)
            self.slots.append(slot)
            for op in SCAN_OPERATORS:
                slot.true_cost[op] = tpl.weight_profile[op] * _scan_size(op, base, true_rows)
                slot.est_cost[op] = (tpl.planner_weights[op] * _scan_size(op, base, est_rows)
                                     * math.exp(tpl.operator_affinity[idx][op]))
            slot.order = tuple(sorted(SCAN_OPERATORS, key=lambda o: (slot.est_cost[o], _OP_RANK[o])))
            return idx
        j = self._join_counter
        self._join_counter += 1
        slot = _Slot("join", None, None, 0.0, 0.0)
        self.slots.append(slot)
        left = self._build(shape[0])
        right = self._build(shape[1])
        slot.children = (left, right)
        ls, rs = self.slots[left], self.slots[right]
        slot.true_rows = min(1e9, max(1.0, max(ls.true_rows, rs.true_rows) * tpl.join_factors[j]))
        slot.est_rows = min(1e9, max(1.0, max(ls.est_rows, rs.est_rows) * tpl.join_factors[j] * tpl.join_estimate_bias[j]))
        for op in JOIN_OPERATORS:
            swap = _join_order(op, ls.est_rows, rs.est_rows)
            outer, inner = (rs, ls) if swap else (ls, rs)
            slot.swapped[op] = swap
            true_c = tpl.weight_profile[op] * _join_size(op, outer.true_rows, inner.true_rows, slot.true_rows)
            est_c = tpl.planner_weights[op] * _join_size(op, outer.est_rows, inner.est_rows, slot.est_rows)
            if op == "NestLoop" and inner.kind == "join":
                mt = tpl.weight_profile["Materialize"] * inner.true_rows
                me = tpl.planner_weights["Materialize"] * inner.est_rows
                slot.materialize[op] = (mt, me)
                true_c += mt
                est_c += me
            slot.true_cost[op] = true_c
            slot.est_cost[op] = est_c * math.exp(tpl.operator_affinity[idx][op])
        slot.order = tuple(sorted(JOIN_OPERATORS, key=lambda o: (slot.est_cost[o], _OP_RANK[o])))
        return idx

    def choices(self, hints: HintSet) -> tuple[str, ...]:
        flags = hints.flags
        if all(flags[i] for i in _JOIN_MASK):
            raise PlanningImpossible(f"{format_bits(hints)} disables every join operator")
        if all(flags[i] for i in _SCAN_MASK):
            raise PlanningImpossible(f"{format_bits(hints)} disables every scan operator")
        out = []
        for slot in self.slots:
            for op in slot.order:
                if not flags[_OP_RANK[op]]:
                    out.append(op)
                    break
        return tuple(out)

    def node_costs(self, choice: tuple[str, ...]) -> list[tuple[str, float]]:
        """(label, true cost units) for every node in plan pre-order."""
        out = [(op, c) for op, c, _ in self.top_costs]

        def visit(idx: int) -> None:
            slot = self.slots[idx]
            op = choice[idx]
            if slot.kind == "scan":
                out.append((op, slot.true_cost[op]))
                return
            mat = slot.materialize.get(op)
            out.append((op, slot.true_cost[op] - (mat[0] if mat else 0.0)))
            left, right = slot.children
            first, second = (right, left) if slot.swapped[op] else (left, right)
            visit(first)
            if mat:
                out.append(("Materialize", mat[0]))
            visit(second)

        visit(self.root)
        return out

    def latency_units(self, choice: tuple[str, ...]) -> float:
        total = 0.0
        for _, c, _ in self.top_costs:
            total += c
        for idx, op in enumerate(choice):
            total += self.slots[idx].true_cost[op]
        return total

    def build_plan(self, choice: tuple[str, ...]) -> ExecutionPlan:
        tpl = self.tpl

        def node(idx: int) -> PlanNode:
            slot = self.slots[idx]
            op = choice[idx]
            est_cost = round(slot.est_cost[op], 3)
            if slot.kind == "scan":
                return PlanNode(op, tpl.relations[slot.relation], round(slot.est_rows, 1), est_cost)
            left, right = slot.children
            first, second = (right, left) if slot.swapped[op] else (left, right)
            inner = node(second)
            mat = slot.materialize.get(op)
            if mat:
                inner = PlanNode("Materialize", None, round(self.slots[second].est_rows, 1), round(mat[1], 3), (inner,))
            return PlanNode(op, None, round(slot.est_rows, 1), est_cost, (node(first), inner))

        root = node(self.root)
        rows = self.slots[self.root].est_rows
        for op, _, est in reversed(self.top_costs):
            root = PlanNode(op, None, round(rows, 1), round(est, 3), (root,))
        return ExecutionPlan(root, self.query.query_id)


class SyntheticDB:
    """Planner and executor over a fixed template catalogue.

    ``plan`` and ``execute`` are pure functions of (query, hints) and safe to call
    from many threads at once.
    """

    def __init__(self, templates: Sequence[QueryTemplate], config: GeneratorConfig = GeneratorConfig(),
                 noise_seed: int = 0):
        self.templates = {t.template_id: t for t in templates}
        self.config = config
        self.noise_seed = noise_seed
        self._models: dict[str, _QueryModel] = {}
        self._plans: dict[tuple[str, tuple[str, ...]], tuple[ExecutionPlan, PlanFingerprint]] = {}
        self._lock = threading.Lock()
        self._executions = 0

    @classmethod
    def for_workload(cls, seed: int, n_templates: int = 16, config: GeneratorConfig = GeneratorConfig()) -> SyntheticDB:
        return cls(generate_templates(seed, n_templates, config), config)

    @property
    def executions(self) -> int:
        return self._executions

    def model(self, query: SyntheticQuery) -> _QueryModel:
        m = self._models.get(query.query_id)
        if m is None or m.query != query:
            tpl = self.templates.get(query.template_id)
            if tpl is None:
                raise InvalidParams(f"unknown template {query.template_id} for {query.query_id}")
            if len(query.selectivity) != len(tpl.relations):
                raise InvalidParams(f"{query.query_id}: selectivity arity does not match template")
            m = _QueryModel(tpl, query)
            with self._lock:
                self._models[query.query_id] = m
        return m

    def _plan_entry(self, query: SyntheticQuery, hints: HintSet) -> tuple[ExecutionPlan, PlanFingerprint]:
        m = self.model(query)
        choice = m.choices(hints)
        key = (query.query_id, choice)
        entry = self._plans.get(key)
        if entry is None or entry[0].source_query_id != query.query_id or self._models[query.query_id] is not m:
            plan = m.build_plan(choice)
            entry = (plan, fingerprint(plan))
            with self._lock:
                self._plans[key] = entry
        return entry

    def plan(self, query: SyntheticQuery, hints: HintSet) -> ExecutionPlan:
        return self._plan_entry(query, hints)[0]

    def plan_fingerprint(self, query: SyntheticQuery, hints: HintSet) -> PlanFingerprint:
        return self._plan_entry(query, hints)[1]

    def true_latency(self, query: SyntheticQuery, hints: HintSet) -> float:
        m = self.model(query)
        ms = m.latency_units(m.choices(hints)) * query.scale * MS_PER_UNIT
        if self.config.noise_sigma > 0:
            rng = _rng(self.noise_seed, 4, *[ord(c) for c in query.query_id], int(format_bits(hints), 2))
            ms *= math.exp(rng.normal(0.0, self.config.noise_sigma))
        return ms

    def node_latencies(self, query: SyntheticQuery, hints: HintSet) -> list[tuple[str, float]]:
        m = self.model(query)
        return [(label, c * query.scale * MS_PER_UNIT) for label, c in m.node_costs(m.choices(hints))]

    def execute(self, query: SyntheticQuery, hints: HintSet, timeout_ms: float | None = None) -> float | TimedOut:
        latency = self.true_latency(query, hints)
        with self._lock:
            self._executions += 1
        if timeout_ms is not None and latency > timeout_ms:
            return TimedOut(timeout_ms)
        return latency

    def oracle_best(self, query: SyntheticQuery) -> tuple[float, HintSet]:
        """Brute force over all 128 hint sets without timeouts."""
        rows = []
        for h in enumerate_all():
            try:
                fp = self.plan_fingerprint(query, h)
            except PlanningImpossible:
                continue
            rows.append((h, fp, self.true_latency(query, h)))
        best = min(t for _, _, t in rows)
        winner_fp = next(fp for _, fp, t in rows if t == best)
        return best, canonicalize(h for h, fp, _ in rows if fp == winner_fp)

    def distinct_fingerprints(self, query: SyntheticQuery) -> int:
        seen = set()
        for h in enumerate_all():
            try:
                seen.add(self.plan_fingerprint(query, h))
            except PlanningImpossible:
                pass
        return len(seen)
