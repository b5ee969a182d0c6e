"""Operator-tree plans, their deterministic text rendering and fingerprints.

Plan interchange documents are JSON-compatible trees::

    {"op": "HashJoin", "est_rows": 1200, "children": [
        {"op": "SeqScan", "relation": "title"},
        {"op": "IndexScan", "relation": "movie_keyword"}]}
"""
from __future__ import annotations

import functools
import hashlib
import math
import re
from dataclasses import dataclass, field
from typing import Any, Iterator, Mapping

from .errors import ArityViolation, SchemaViolation, UnknownOperator

JOIN_OPERATORS = ("NestLoop", "HashJoin", "MergeJoin")
SCAN_OPERATORS = ("SeqScan", "IndexScan", "IndexOnlyScan", "BitmapScan")
PASS_THROUGH_OPERATORS = ("Aggregate", "Sort", "Materialize")
OPERATORS = JOIN_OPERATORS + SCAN_OPERATORS + PASS_THROUGH_OPERATORS

_ARITY = {**{op: 2 for op in JOIN_OPERATORS}, **{op: 0 for op in SCAN_OPERATORS},
          **{op: 1 for op in PASS_THROUGH_OPERATORS}}
_DOC_KEYS = {"op", "relation", "est_rows", "est_cost", "children"}
# keeps the text rendering injective
_RELATION_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_$.]*\Z")


@dataclass(frozen=True)
class PlanNode:
    operator: str
    relation: str | None = None
    est_rows: float | None = None
    est_cost: float | None = None
    children: tuple[PlanNode, ...] = ()

    def __post_init__(self) -> None:
        if self.operator not in _ARITY:
            raise UnknownOperator(f"unknown operator {self.operator!r}")
        if len(self.children) != _ARITY[self.operator]:
            raise ArityViolation(
                f"{self.operator} expects {_ARITY[self.operator]} children, got {len(self.children)}"
            )
        if self.relation is not None and self.operator not in SCAN_OPERATORS:
            raise SchemaViolation(f"only scans carry a relation, got {self.operator}({self.relation})")
        if self.relation is not None and not _RELATION_RE.match(self.relation):
            raise SchemaViolation(f"relation must be a plain name token, got {self.relation!r}")

    def walk(self) -> Iterator[PlanNode]:
        """Pre-order traversal."""
        yield self
        for child in self.children:
            yield from child.walk()

    @property
    def label(self) -> str:
        return f"{self.operator}({self.relation})" if self.relation is not None else self.operator


@dataclass(frozen=True)
class ExecutionPlan:
    root: PlanNode
    source_query_id: str = ""

    @functools.cached_property
    def digest(self) -> PlanFingerprint:
        return PlanFingerprint(hashlib.sha256(render_plan_text(self.root).encode("utf-8")).hexdigest())

    def operators(self) -> list[str]:
        return [node.operator for node in self.root.walk()]

    def to_document(self) -> dict[str, Any]:
        return node_to_document(self.root)


@dataclass(frozen=True)
class PlanFingerprint:
    digest: str

    def __str__(self) -> str:
        return self.digest


def _number(doc: Mapping[str, Any], key: str) -> float | None:
    value = doc.get(key)
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaViolation(f"{key} must be a number, got {value!r}")
    if not math.isfinite(value) or value < 0:
        raise SchemaViolation(f"{key} must be finite and non-negative, got {value!r}")
    return float(value)


def _parse_node(doc: Any, path: str) -> PlanNode:
    if not isinstance(doc, Mapping):
        raise SchemaViolation(f"{path}: plan node must be an object")
    extra = set(doc) - _DOC_KEYS
    if extra:
        raise SchemaViolation(f"{path}: unexpected fields {sorted(extra)}")
    op = doc.get("op")
    if not isinstance(op, str):
        raise SchemaViolation(f"{path}: 'op' is required and must be a string")
    if op not in _ARITY:
        raise UnknownOperator(f"{path}: unknown operator {op!r}")
    relation = doc.get("relation")
    if relation is not None and not isinstance(relation, str):
        raise SchemaViolation(f"{path}: 'relation' must be a string")
    children = doc.get("children", [])
    if not isinstance(children, list):
        raise SchemaViolation(f"{path}: 'children' must be an array")
    kids = tuple(_parse_node(c, f"{path}.children[{i}]") for i, c in enumerate(children))
    try:
        return PlanNode(op, relation, _number(doc, "est_rows"), _number(doc, "est_cost"), kids)
    except SchemaViolation as exc:
        raise type(exc)(f"{path}: {exc}") from None


def parse_plan(document: Mapping[str, Any], source_query_id: str = "") -> ExecutionPlan:
    return ExecutionPlan(_parse_node(document, "$"), source_query_id)


def node_to_document(node: PlanNode) -> dict[str, Any]:
    doc: dict[str, Any] = {"op": node.operator}
    if node.relation is not None:
        doc["relation"] = node.relation
    if node.est_rows is not None:
        doc["est_rows"] = node.est_rows
    if node.est_cost is not None:
        doc["est_cost"] = node.est_cost
    if node.children:
        doc["children"] = [node_to_document(c) for c in node.children]
    return doc


def render_plan_text(plan: ExecutionPlan | PlanNode) -> str:
    """One node per line, pre-order, two spaces of indent per depth. Estimates are omitted."""
    root = plan.root if isinstance(plan, ExecutionPlan) else plan
    lines: list[str] = []

    def visit(node: PlanNode, depth: int) -> None:
        lines.append("  " * depth + node.label)
        for child in node.children:
            visit(child, depth + 1)

    visit(root, 0)
    return "\n".join(lines)


def fingerprint(plan: ExecutionPlan | PlanNode) -> PlanFingerprint:
    if isinstance(plan, ExecutionPlan):
        return plan.digest
    text = render_plan_text(plan)
    return PlanFingerprint(hashlib.sha256(text.encode("utf-8")).hexdigest())
