"""Hint transfer by neighbourhood voting with a two-neighbourhood consistency check."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

from .embedding import EmbeddingProvider, embed_text
from .errors import EmptyStore
from .hints import HintSet, format_bits
from .plan import ExecutionPlan, fingerprint, render_plan_text
from .store import Neighbor, ReferenceStore

Replanner = Callable[[HintSet], ExecutionPlan]


@dataclass(frozen=True)
class MappingParams:
    n_vote: int = 16
    k_check: int = 16
    consistency: bool = True

    def __post_init__(self) -> None:
        if self.n_vote < 1 or self.k_check < 1:
            raise ValueError("n_vote and k_check must be >= 1")


@dataclass(frozen=True)
class MappingDecision:
    candidate: HintSet | None = None
    accepted: bool = False
    t_bar_default: float | None = None
    t_bar_candidate: float | None = None
    vote_counts: dict[str, int] = field(default_factory=dict)
    reason: str = ""

    def __post_init__(self) -> None:
        if not self.accepted:
            return
        if self.candidate is None or self.candidate.is_default:
            raise ValueError("an accepted decision needs a non-default candidate")
        if (self.t_bar_default is not None and self.t_bar_candidate is not None
                and not self.t_bar_candidate < self.t_bar_default):
            raise ValueError("an accepted decision needs t_bar_candidate < t_bar_default")

    def to_record(self) -> dict[str, Any]:
        return {
            "candidate": format_bits(self.candidate) if self.candidate is not None else None,
            "accepted": self.accepted,
            "t_bar_default": self.t_bar_default,
            "t_bar_candidate": self.t_bar_candidate,
            "vote_counts": dict(self.vote_counts),
            "reason": self.reason,
        }


def vote_counts(neighbors: Sequence[Neighbor]) -> dict[str, int]:
    counts: dict[str, int] = {}
    for nb in neighbors:
        bits = format_bits(nb.triple.h_star)
        counts[bits] = counts.get(bits, 0) + 1
    return counts


def vote_candidate(neighbors: Sequence[Neighbor]) -> HintSet | None:
    """Most frequent non-default hint set among ``neighbors`` (sorted nearest first).

    Count ties go to the hint set whose closest supporter is nearer, then to the
    smaller bitstring.
    """
    tally: dict[HintSet, list] = {}
    for nb in neighbors:
        h = nb.triple.h_star
        if h.is_default:
            continue
        entry = tally.get(h)
        if entry is None:
            tally[h] = [1, nb.distance]
        else:
            entry[0] += 1
            entry[1] = min(entry[1], nb.distance)
    if not tally:
        return None
    return min(tally, key=lambda h: (-tally[h][0], tally[h][1], format_bits(h)))


def consistency_check(p0: Any, p_cand: Any, params: MappingParams, store: ReferenceStore) -> tuple[float, float, bool]:
    """Return (mean default latency near p0, mean optimized latency near p_cand, accepted)."""
    k0 = store.knn_default(p0, params.k_check)
    kc = store.knn_optimized(p_cand, params.k_check)
    t_bar_default = sum(nb.triple.t_def for nb in k0) / len(k0)
    t_bar_candidate = sum(nb.triple.t_opt for nb in kc) / len(kc)
    return t_bar_default, t_bar_candidate, t_bar_candidate < t_bar_default


def map_plan(
    default_plan: ExecutionPlan,
    replan: Replanner,
    provider: EmbeddingProvider,
    store: ReferenceStore,
    params: MappingParams = MappingParams(),
) -> MappingDecision:
    """Recommend a hint set for the query behind ``default_plan``.

    ``replan`` plans the same query under a given hint set.
    """
    if len(store) == 0:
        raise EmptyStore("plan mapping needs a non-empty reference store")
    p0 = embed_text(provider, render_plan_text(default_plan))
    neighbors = store.knn_default(p0, params.n_vote)
    counts = vote_counts(neighbors)
    candidate = vote_candidate(neighbors)
    if candidate is None:
        return MappingDecision(vote_counts=counts, reason="no non-default votes")
    cand_plan = replan(candidate)
    if fingerprint(cand_plan) == fingerprint(default_plan):
        return MappingDecision(candidate=candidate, vote_counts=counts, reason="candidate plan equals default plan")
    if not params.consistency:
        return MappingDecision(candidate=candidate, accepted=True, vote_counts=counts, reason="consistency check disabled")
    p_cand = embed_text(provider, render_plan_text(cand_plan))
    t0, tc, ok = consistency_check(p0, p_cand, params, store)
    return MappingDecision(
        candidate=candidate,
        accepted=ok,
        t_bar_default=t0,
        t_bar_candidate=tc,
        vote_counts=counts,
        reason="accepted" if ok else "consistency check rejected",
    )
