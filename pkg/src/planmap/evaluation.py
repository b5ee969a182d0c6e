"""Metrics for offline evaluation: cross-validation, ablations, hint statistics, PCA.

Speed-ups are always computed from summed latencies, never as a mean of ratios.
Latencies are capped at the timeout, as a killed query costs exactly that long.
"""
from __future__ import annotations

import random
import warnings
from dataclasses import dataclass, field
from functools import partial
from typing import Any, Iterable, Literal, Sequence

import numpy as np

from .embedding import EmbeddingProvider, LocalHashingProvider, PlanTextProvider
from .errors import DegenerateCovariance, InvalidFoldCount
from .hints import DEFAULT, HintSet, format_bits
from .mapping import MappingDecision, MappingParams, map_plan
from .plan import ExecutionPlan, fingerprint, render_plan_text
from .store import ReferenceStore, ReferenceTriple
from .synthetic import SyntheticDB, SyntheticQuery

DEFAULT_TIMEOUT_MS = 450_000.0

SUMMARY_FIELDS = (
    "mean_fold_speedup_pct",
    "total_speedup_pct",
    "max_achievable_speedup_pct",
    "faster_pct",
    "slower_pct",
    "unchanged_pct",
    "p90_change_pct",
    "median_change_pct",
)
FOLD_FIELDS = ("fold_index", "total_default_ms", "total_chosen_ms", "speedup_pct",
               "n_faster", "n_slower", "n_unchanged", "n_timeouts")
BAND_FIELDS = ("upper_bound", "mean_default_ms", "mean_boosted_ms", "boost_pct")
OUTCOME_FIELDS = ("query_id", "fold_index", "default_ms", "chosen_ms", "oracle_ms", "chosen_hints",
                  "category", "timed_out", "reason")
ABLATION_FIELDS = ("metric", "consistency", "total_speedup_pct", "mean_fold_speedup_pct", "n_timeouts", "n_regress_2x")
PCA_FIELDS = ("query_id", "template_label", "pc1", "pc2")


def speedup_pct(total_default: float, total_chosen: float) -> float:
    return 100.0 * (total_default - total_chosen) / total_default


@dataclass(frozen=True)
class QueryFacts:
    """Ground truth for one query, computed once and shared by every fold and variant."""

    query: SyntheticQuery
    default_plan: ExecutionPlan
    default_ms: float
    best_hints: HintSet
    best_ms: float
    best_plan: ExecutionPlan

    @property
    def query_id(self) -> str:
        return self.query.query_id


def collect_facts(queries: Sequence[SyntheticQuery], db: SyntheticDB) -> list[QueryFacts]:
    out = []
    for q in queries:
        best_ms, best = db.oracle_best(q)
        out.append(QueryFacts(q, db.plan(q, DEFAULT), db.true_latency(q, DEFAULT), best, best_ms, db.plan(q, best)))
    return out


def facts_triple(f: QueryFacts, provider: EmbeddingProvider) -> ReferenceTriple:
    d_vec = provider.embed(render_plan_text(f.default_plan))
    if f.best_hints.is_default:
        return ReferenceTriple(f.query_id, d_vec, fingerprint(f.default_plan), DEFAULT, d_vec, f.default_ms, f.default_ms)
    o_vec = provider.embed(render_plan_text(f.best_plan))
    return ReferenceTriple(f.query_id, d_vec, fingerprint(f.default_plan), f.best_hints, o_vec, f.default_ms, f.best_ms)


def frequency_table(hints: Iterable[HintSet]) -> list[tuple[str, int]]:
    """(bitstring, count) rows, most frequent first."""
    counts: dict[str, int] = {}
    for h in hints:
        bits = format_bits(h)
        counts[bits] = counts.get(bits, 0) + 1
    return sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))


def fold_assignment(n: int, folds: int, seed: int) -> list[list[int]]:
    if folds < 2 or n < folds:
        raise InvalidFoldCount(f"need 2 <= folds <= workload size, got folds={folds}, n={n}")
    order = list(range(n))
    random.Random(seed).shuffle(order)
    return [sorted(int(i) for i in chunk) for chunk in np.array_split(np.asarray(order), folds)]


@dataclass(frozen=True)
class TestOutcome:
    query_id: str
    fold_index: int
    default_ms: float
    chosen_ms: float
    oracle_ms: float
    chosen_hints: HintSet
    unchanged: bool
    timed_out: bool
    default_timed_out: bool
    decision: MappingDecision

    @property
    def category(self) -> str:
        if self.unchanged or self.chosen_ms == self.default_ms:
            return "unchanged"
        return "faster" if self.chosen_ms < self.default_ms else "slower"


def outcome_row(o: TestOutcome) -> tuple[Any, ...]:
    return (o.query_id, o.fold_index, o.default_ms, o.chosen_ms, o.oracle_ms, o.chosen_hints.bits,
            o.category, o.timed_out, o.decision.reason)


@dataclass(frozen=True)
class FoldReport:
    fold_index: int
    total_default_ms: float
    total_chosen_ms: float
    speedup_pct: float
    n_faster: int
    n_slower: int
    n_unchanged: int
    n_timeouts: int


@dataclass(frozen=True)
class PercentileBand:
    upper_bound: float
    mean_default_ms: float
    mean_boosted_ms: float
    boost_pct: float


@dataclass
class CrossvalResult:
    folds: list[FoldReport]
    outcomes: list[TestOutcome]
    summary: dict[str, float]
    bands: list[PercentileBand]
    timeout_ms: float
    variant: dict[str, Any] = field(default_factory=dict)

    @property
    def n_timeouts(self) -> int:
        return sum(f.n_timeouts for f in self.folds)

    def regressions(self, factor: float = 2.0) -> list[TestOutcome]:
        return [o for o in self.outcomes if o.chosen_ms > factor * o.default_ms]


def _capped(x: float, cap: float) -> float:
    return min(x, cap)


def percentile_bands(default_ms: Sequence[float], chosen_ms: Sequence[float], n_bands: int = 10) -> list[PercentileBand]:
    """Slice queries ordered by default latency into equal-count bands (sizes differ by at most one)."""
    order = np.argsort(np.asarray(default_ms), kind="stable")
    d = np.asarray(default_ms)[order]
    c = np.asarray(chosen_ms)[order]
    bands = []
    for i, idx in enumerate(np.array_split(np.arange(len(d)), n_bands)):
        md = float(d[idx].mean()) if len(idx) else float("nan")
        mc = float(c[idx].mean()) if len(idx) else float("nan")
        bands.append(PercentileBand(round((i + 1) / n_bands, 10), md, mc, speedup_pct(md, mc) if len(idx) else float("nan")))
    return bands


def summarize(folds: Sequence[FoldReport], outcomes: Sequence[TestOutcome], timeout_ms: float) -> dict[str, float]:
    d = np.array([_capped(o.default_ms, timeout_ms) for o in outcomes])
    c = np.array([_capped(o.chosen_ms, timeout_ms) for o in outcomes])
    best = np.array([_capped(o.oracle_ms, timeout_ms) for o in outcomes])
    sizes = [f.n_faster + f.n_slower + f.n_unchanged for f in folds]
    return {
        "mean_fold_speedup_pct": float(np.mean([f.speedup_pct for f in folds])),
        "total_speedup_pct": speedup_pct(float(d.sum()), float(c.sum())),
        "max_achievable_speedup_pct": speedup_pct(float(d.sum()), float(best.sum())),
        "faster_pct": float(np.mean([100.0 * f.n_faster / n for f, n in zip(folds, sizes)])),
        "slower_pct": float(np.mean([100.0 * f.n_slower / n for f, n in zip(folds, sizes)])),
        "unchanged_pct": float(np.mean([100.0 * f.n_unchanged / n for f, n in zip(folds, sizes)])),
        "p90_change_pct": speedup_pct(float(np.percentile(d, 90)), float(np.percentile(c, 90))),
        "median_change_pct": speedup_pct(float(np.median(d)), float(np.median(c))),
    }


def crossval(
    facts: Sequence[QueryFacts],
    db: SyntheticDB,
    folds: int = 10,
    params: MappingParams = MappingParams(),
    metric: Literal["embedding", "levenshtein"] = "embedding",
    provider: EmbeddingProvider | None = None,
    seed: int = 0,
    timeout_ms: float = DEFAULT_TIMEOUT_MS,
    policy: Literal["mapping", "oracle"] = "mapping",
    distance_cache: dict | None = None,
) -> CrossvalResult:
    """k-fold evaluation of plan mapping against the default optimizer.

    Each fold's store is built from the oracle-best triples of the other folds;
    test queries only run mapping (no search). ``policy="oracle"`` replaces the
    mapping decision by the oracle-best hint set, giving the achievable bound.
    """
    assignment = fold_assignment(len(facts), folds, seed)
    if metric == "levenshtein":
        provider = PlanTextProvider()
        store_metric = "levenshtein"
        distance_cache = distance_cache if distance_cache is not None else {}
    else:
        provider = provider or LocalHashingProvider()
        store_metric = "euclidean"
    triples = [facts_triple(f, provider) for f in facts] if policy == "mapping" else []

    reports: list[FoldReport] = []
    outcomes: list[TestOutcome] = []
    for k, test_idx in enumerate(assignment):
        test_set = set(test_idx)
        store = ReferenceStore(metric=store_metric, distance_cache=distance_cache)
        if policy == "mapping":
            store.extend([t for i, t in enumerate(triples) if i not in test_set])
        fold_out = []
        for i in test_idx:
            f = facts[i]
            if policy == "oracle":
                decision = MappingDecision(candidate=f.best_hints, accepted=not f.best_hints.is_default, reason="oracle")
            else:
                decision = map_plan(f.default_plan, partial(db.plan, f.query), provider, store, params)
            chosen = decision.candidate if decision.accepted else DEFAULT
            chosen_ms = db.true_latency(f.query, chosen)
            fold_out.append(TestOutcome(
                query_id=f.query_id,
                fold_index=k,
                default_ms=f.default_ms,
                chosen_ms=chosen_ms,
                oracle_ms=f.best_ms,
                chosen_hints=chosen,
                unchanged=db.plan_fingerprint(f.query, chosen) == fingerprint(f.default_plan),
                timed_out=chosen_ms > timeout_ms,
                default_timed_out=f.default_ms > timeout_ms,
                decision=decision,
            ))
        cats = [o.category for o in fold_out]
        td = sum(_capped(o.default_ms, timeout_ms) for o in fold_out)
        tc = sum(_capped(o.chosen_ms, timeout_ms) for o in fold_out)
        reports.append(FoldReport(k, td, tc, speedup_pct(td, tc), cats.count("faster"), cats.count("slower"),
                                  cats.count("unchanged"), sum(o.timed_out for o in fold_out)))
        outcomes.extend(fold_out)

    summary = summarize(reports, outcomes, timeout_ms)
    bands = percentile_bands([_capped(o.default_ms, timeout_ms) for o in outcomes],
                             [_capped(o.chosen_ms, timeout_ms) for o in outcomes])
    variant = {"metric": metric, "consistency": params.consistency, "n_vote": params.n_vote,
               "k_check": params.k_check, "policy": policy, "folds": folds, "seed": seed}
    return CrossvalResult(reports, outcomes, summary, bands, timeout_ms, variant)


ABLATION_VARIANTS = (
    ("levenshtein", False),
    ("embedding", False),
    ("levenshtein", True),
    ("embedding", True),
)


def ablate(facts: Sequence[QueryFacts], db: SyntheticDB, variants: Sequence[tuple[str, bool]] = ABLATION_VARIANTS,
           folds: int = 10, params: MappingParams = MappingParams(), seed: int = 0,
           timeout_ms: float = DEFAULT_TIMEOUT_MS, provider: EmbeddingProvider | None = None) -> list[dict[str, Any]]:
    """Cross-validate every (retrieval metric, consistency check) combination on identical folds."""
    rows = []
    lev_cache: dict = {}
    for metric, consistency in variants:
        p = MappingParams(params.n_vote, params.k_check, consistency)
        res = crossval(facts, db, folds, p, metric, provider, seed, timeout_ms, distance_cache=lev_cache)
        rows.append({
            "metric": metric,
            "consistency": "on" if consistency else "off",
            "total_speedup_pct": res.summary["total_speedup_pct"],
            "mean_fold_speedup_pct": res.summary["mean_fold_speedup_pct"],
            "n_timeouts": res.n_timeouts,
            "n_regress_2x": len(res.regressions()),
        })
    return rows


# -- PCA ---------------------------------------------------------------------

def _power_iteration(mat: np.ndarray, rng: np.random.Generator, tol: float = 1e-10,
                     max_iter: int = 1000) -> tuple[float, np.ndarray]:
    v = rng.standard_normal(mat.shape[0])
    v /= np.linalg.norm(v)
    lam = float(v @ mat @ v)
    for _ in range(max_iter):
        w = mat @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0, v
        v = w / norm
        new = float(v @ mat @ v)
        if abs(new - lam) <= tol * abs(new):
            lam = new
            break
        lam = new
    return lam, v


def _fix_sign(v: np.ndarray) -> np.ndarray:
    nz = np.flatnonzero(np.abs(v) > 1e-12 * max(1.0, float(np.abs(v).max())))
    if len(nz) and v[nz[0]] < 0:
        return -v
    return v


def principal_components(points: np.ndarray, n_components: int = 2, seed: int = 0) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Top principal axes by power iteration with deflation.

    Returns (components as rows, eigenvalues, projected points). Components whose
    eigenvalue is numerically zero are returned as zero vectors.
    """
    x = np.asarray(points, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("need a 2-D array with at least two points")
    xc = x - x.mean(axis=0)
    cov = xc.T @ xc / (x.shape[0] - 1)
    scale = float(np.trace(cov))
    rng = np.random.default_rng(seed)
    comps, lams = [], []
    for _ in range(n_components):
        lam, v = _power_iteration(cov, rng)
        if scale == 0.0 or lam <= 1e-12 * scale:
            warnings.warn(f"covariance rank below {n_components}; emitting zero component", DegenerateCovariance)
            comps.append(np.zeros(x.shape[1]))
            lams.append(0.0)
            continue
        v = _fix_sign(v)
        comps.append(v)
        lams.append(lam)
        cov = cov - lam * np.outer(v, v)
    components = np.vstack(comps)
    return components, np.asarray(lams), xc @ components.T


def pca_rows(store: ReferenceStore, labels: dict[str, str] | None = None) -> list[tuple[str, str, float, float]]:
    if len(store) < 3:
        raise ValueError("PCA needs at least 3 stored triples")
    triples = store.triples
    _, _, proj = principal_components(np.vstack([np.asarray(t.d_vec, dtype=np.float64) for t in triples]))
    labels = labels or {}
    return [(t.query_id, labels.get(t.query_id, template_label(t.query_id)), float(p[0]), float(p[1]))
            for t, p in zip(triples, proj)]


def template_label(query_id: str) -> str:
    """Synthetic query ids look like ``t03-000123``; the prefix names the template."""
    head, sep, _ = query_id.partition("-")
    return head if sep else ""
