from __future__ import annotations

import numpy as np
import pytest

from planmap.hints import DEFAULT, HintSet, parse_bits
from planmap.plan import ExecutionPlan, PlanFingerprint, PlanNode
from planmap.store import ReferenceTriple
from planmap.synthetic import SyntheticDB, generate_workload

REFERENCE_SEED = 7


def scan(op: str, rel: str) -> PlanNode:
    return PlanNode(op, rel)


def join(op: str, left: PlanNode, right: PlanNode) -> PlanNode:
    return PlanNode(op, None, children=(left, right))


def make_triple(qid: str, d_vec, h: str | HintSet, o_vec=None, t_def: float = 100.0, t_opt: float | None = None,
                fp: str = "0" * 64) -> ReferenceTriple:
    hints = parse_bits(h) if isinstance(h, str) else h
    d = np.asarray(d_vec, dtype=np.float64)
    if hints.is_default:
        return ReferenceTriple(qid, d, PlanFingerprint(fp), DEFAULT, d, t_def, t_def)
    o = np.asarray(o_vec if o_vec is not None else d_vec, dtype=np.float64)
    return ReferenceTriple(qid, d, PlanFingerprint(fp), hints, o, t_def, t_opt if t_opt is not None else t_def / 2)


@pytest.fixture(scope="session")
def small_workload():
    return generate_workload(11, n_queries=60)


@pytest.fixture(scope="session")
def small_db():
    return SyntheticDB.for_workload(11)


@pytest.fixture
def three_way_plan() -> ExecutionPlan:
    root = PlanNode("Aggregate", None, children=(
        join("HashJoin", join("NestLoop", scan("SeqScan", "title"), scan("IndexScan", "movie_keyword")),
             scan("SeqScan", "keyword")),))
    return ExecutionPlan(root, "q1")


# -- acceptance bookkeeping ----------------------------------------------------------

CRITERIA: dict[int, tuple[bool, str]] = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    CRITERIA[number] = (ok, detail)
    print(f"criterion {number}: {'PASS' if ok else 'FAIL'} ({detail})")


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        ok, detail = CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
