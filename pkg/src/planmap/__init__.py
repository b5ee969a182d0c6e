"""Hint-set recommendation for a query optimizer by plan-embedding retrieval.

A query's default plan is embedded and matched against stored experience from
past queries; the most popular optimal hint set among its neighbours is applied
when a two-neighbourhood latency check agrees. Otherwise an exhaustive, timeout
pruned search over all 128 hint sets finds the best configuration and its result
is added to the store.
"""
from __future__ import annotations

from .embedding import (
    LocalHashingProvider,
    PlanTextProvider,
    ProviderConfig,
    RemoteProvider,
    embed_text,
    euclidean_distance,
    levenshtein_distance,
    make_provider,
)
from .errors import *  # noqa: F401,F403
from .hints import (
    DEFAULT,
    HINT_NAMES,
    HintSet,
    canonicalize,
    disabled_count,
    enumerate_all,
    format_bits,
    parse_bits,
)
from .mapping import MappingDecision, MappingParams, consistency_check, map_plan, vote_candidate
from .pipeline import PipelineConfig, QueryReport, WorkloadRun, process_query, run_workload
from .plan import ExecutionPlan, PlanFingerprint, PlanNode, fingerprint, parse_plan, render_plan_text
from .search import SearchResult, adaptive_search, extract_best, make_reference_triple
from .store import Neighbor, ReferenceStore, ReferenceTriple
from .synthetic import GeneratorConfig, SyntheticDB, SyntheticQuery, TimedOut, generate_workload

__version__ = "0.1.0"
