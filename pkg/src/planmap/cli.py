"""Command-line front end.

Every subcommand prints an aligned table to stdout; ``--out`` style flags also
write machine-readable CSV (with a header row) or newline-delimited JSON.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import warnings
from functools import partial
from pathlib import Path
from typing import Any, Iterable, Sequence

from . import evaluation as ev
from .embedding import ProviderConfig, make_provider
from .errors import EmptyStore, PlanMapError
from .hints import DEFAULT, HintSet, parse_bits
from .mapping import MappingDecision, MappingParams, map_plan, vote_candidate, vote_counts
from .pipeline import PipelineConfig, run_workload
from .plan import ExecutionPlan, parse_plan, render_plan_text
from .search import adaptive_search, make_reference_triple
from .store import ReferenceStore
from .synthetic import SyntheticDB, SyntheticQuery, generate_workload, load_workload, save_workload

log = logging.getLogger("planmap")


# -- output helpers ------------------------------------------------------------

def _fmt(v: Any) -> str:
    if isinstance(v, float):
        return f"{v:.2f}"
    if v is None:
        return "-"
    return str(v)


def format_table(headers: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    cells = [[_fmt(v) for v in r] for r in rows]
    widths = [max([len(h)] + [len(r[i]) for r in cells]) for i, h in enumerate(headers)]

    def line(vals: Sequence[str]) -> str:
        return "  ".join(v.ljust(w) if i == 0 else v.rjust(w) for i, (v, w) in enumerate(zip(vals, widths))).rstrip()

    return "\n".join([line(list(headers)), line(["-" * w for w in widths])] + [line(r) for r in cells])


def write_csv(path: str | Path, headers: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(headers)
        w.writerows(rows)


def write_jsonl(path: str | Path, records: Iterable[dict[str, Any]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


# -- shared plumbing -----------------------------------------------------------

def _provider(args: argparse.Namespace):
    cfg = ProviderConfig(kind=args.provider, endpoint=args.embed_endpoint, model_name=args.embed_model,
                         auth_env_var=args.embed_auth_env)
    return make_provider(cfg)


def _workload(args: argparse.Namespace) -> list[SyntheticQuery]:
    if getattr(args, "workload", None):
        queries = load_workload(args.workload)
        if not queries:
            raise PlanMapError(f"{args.workload}: workload is empty")
        return queries
    return generate_workload(args.seed, n_templates=args.templates, n_queries=args.queries)


def _db(queries: Sequence[SyntheticQuery]) -> SyntheticDB:
    q0 = queries[0]
    return SyntheticDB.for_workload(q0.workload_seed, q0.n_templates)


def _params(args: argparse.Namespace) -> MappingParams:
    return MappingParams(args.n, args.k, getattr(args, "consistency", "on") == "on")


def _require_store(args: argparse.Namespace) -> str:
    if not args.store:
        raise PlanMapError("--store is required for this command")
    return args.store


# -- subcommands ---------------------------------------------------------------

def cmd_gen_workload(args: argparse.Namespace) -> int:
    queries = generate_workload(args.seed, n_templates=args.templates, n_queries=args.queries)
    save_workload(queries, args.out)
    counts: dict[int, int] = {}
    for q in queries:
        counts[q.template_id] = counts.get(q.template_id, 0) + 1
    print(format_table(["template", "queries"], sorted(counts.items())))
    print(f"wrote {len(queries)} queries to {args.out}")
    return 0


def cmd_build_store(args: argparse.Namespace) -> int:
    out = _require_store(args)
    queries = _workload(args)
    db = _db(queries)
    provider = _provider(args)
    store = ReferenceStore()
    for i, q in enumerate(queries, 1):
        try:
            result = adaptive_search(q, db, db, workers=args.workers, mode=args.search_mode)
            store.insert(make_reference_triple(q, result, db, provider, q.query_id))
        except PlanMapError as exc:
            raise PlanMapError(f"query {q.query_id}: {exc}") from exc
        if i % 500 == 0:
            log.info("searched %d/%d queries", i, len(queries))
    store.save(out)
    table = ev.frequency_table(t.h_star for t in store)
    print(format_table(["hint_set", "count"], table))
    print(f"wrote {len(store)} triples to {out}")
    if args.freq_out:
        write_csv(args.freq_out, ["hint_set", "count"], table)
    return 0


def _load_plan_source(path: str) -> tuple[ExecutionPlan, dict[str, ExecutionPlan]]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(doc, dict) and "plans" in doc:
        plans = {str(bits): parse_plan(d, str(doc.get("query_id", ""))) for bits, d in doc["plans"].items()}
        for bits in plans:
            parse_bits(bits)
        default_key = DEFAULT.bits
        if default_key not in plans:
            raise PlanMapError(f"{path}: catalogue has no plan for the default hint set {default_key}")
        return plans[default_key], plans
    return parse_plan(doc), {}


def cmd_map(args: argparse.Namespace) -> int:
    store = ReferenceStore.load(_require_store(args))
    provider = _provider(args)
    params = _params(args)
    if args.plan:
        default_plan, catalogue = _load_plan_source(args.plan)

        def replan(h: HintSet) -> ExecutionPlan:
            if h.bits not in catalogue:
                raise PlanMapError(f"plan catalogue has no plan for hint set {h.bits}")
            return catalogue[h.bits]

        if catalogue:
            decision = map_plan(default_plan, replan, provider, store, params)
        else:
            # a bare plan cannot be re-planned, so only the vote stage runs
            if len(store) == 0:
                raise EmptyStore("plan mapping needs a non-empty reference store")
            neighbors = store.knn_default(provider.embed(render_plan_text(default_plan)), params.n_vote)
            decision = MappingDecision(candidate=vote_candidate(neighbors), vote_counts=vote_counts(neighbors),
                                       reason="vote only: pass a plan catalogue to run the consistency check")
    else:
        if not (args.workload and args.query_id):
            raise PlanMapError("map needs --plan, or --workload with --query-id")
        queries = load_workload(args.workload)
        query = next((q for q in queries if q.query_id == args.query_id), None)
        if query is None:
            raise PlanMapError(f"query {args.query_id} not in {args.workload}")
        db = _db(queries)
        decision = map_plan(db.plan(query, DEFAULT), partial(db.plan, query), provider, store, params)
    cand = decision.candidate.bits if decision.candidate is not None else "no candidate"
    print(format_table(["field", "value"], [
        ("candidate", cand),
        ("accepted", decision.accepted),
        ("t_bar_default_ms", decision.t_bar_default),
        ("t_bar_candidate_ms", decision.t_bar_candidate),
        ("reason", decision.reason),
    ]))
    if decision.vote_counts:
        print()
        print(format_table(["hint_set", "votes"], sorted(decision.vote_counts.items(), key=lambda kv: (-kv[1], kv[0]))))
    if args.json:
        print(json.dumps(decision.to_record()))
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    queries = _workload(args)
    db = _db(queries)
    provider = _provider(args)
    store_path = Path(args.store) if args.store else None
    store = ReferenceStore.load(store_path) if store_path and store_path.exists() else ReferenceStore()
    mode = "map_only" if args.mode == "map-only" else "full"
    config = PipelineConfig(params=_params(args), mode=mode, timeout_ms=args.timeout_ms, store_path=store_path,
                            provider=ProviderConfig(kind=args.provider, endpoint=args.embed_endpoint,
                                                    model_name=args.embed_model, auth_env_var=args.embed_auth_env),
                            workers=args.workers, search_mode=args.search_mode)
    run = run_workload(queries, config, store, db, db, provider)
    if mode == "full" and store_path is not None:
        store.save(store_path)
    summary = run.summary()
    print(format_table(["metric", "value"], summary.items()))
    for err in run.errors:
        print(f"error: {err['query_id']}: {err['error']}", file=sys.stderr)
    if args.report:
        write_jsonl(args.report, [r.to_record() for r in run.reports])
        with open(args.report, "a", encoding="utf-8") as fh:
            fh.write(json.dumps({"summary": summary}, separators=(",", ":")) + "\n")
    return 1 if run.errors and not run.reports else 0


def _print_crossval(res: ev.CrossvalResult) -> None:
    print(format_table(ev.FOLD_FIELDS, [[getattr(f, k) for k in ev.FOLD_FIELDS] for f in res.folds]))
    print()
    print(format_table(["metric", "value"], res.summary.items()))
    print()
    print(format_table(ev.BAND_FIELDS, [[getattr(b, k) for k in ev.BAND_FIELDS] for b in res.bands]))


def cmd_crossval(args: argparse.Namespace) -> int:
    queries = _workload(args)
    db = _db(queries)
    facts = ev.collect_facts(queries, db)
    provider = _provider(args) if args.metric == "embedding" else None
    res = ev.crossval(facts, db, folds=args.folds, params=_params(args), metric=args.metric, provider=provider,
                      seed=args.seed, timeout_ms=args.timeout_ms, policy=args.policy)
    _print_crossval(res)
    if args.out_prefix:
        p = args.out_prefix
        write_csv(f"{p}folds.csv", ev.FOLD_FIELDS, [[getattr(f, k) for k in ev.FOLD_FIELDS] for f in res.folds])
        write_csv(f"{p}bands.csv", ev.BAND_FIELDS, [[getattr(b, k) for k in ev.BAND_FIELDS] for b in res.bands])
        write_csv(f"{p}summary.csv", ["metric", "value"], res.summary.items())
        write_csv(f"{p}queries.csv", ev.OUTCOME_FIELDS, [ev.outcome_row(o) for o in res.outcomes])
    return 0


def cmd_ablate(args: argparse.Namespace) -> int:
    queries = _workload(args)
    db = _db(queries)
    facts = ev.collect_facts(queries, db)
    provider = _provider(args)
    rows = ev.ablate(facts, db, folds=args.folds, params=MappingParams(args.n, args.k), seed=args.seed,
                     timeout_ms=args.timeout_ms, provider=provider)
    print(format_table(ev.ABLATION_FIELDS, [[r[k] for k in ev.ABLATION_FIELDS] for r in rows]))
    if args.out:
        write_csv(args.out, ev.ABLATION_FIELDS, [[r[k] for k in ev.ABLATION_FIELDS] for r in rows])
    return 0


def cmd_pca(args: argparse.Namespace) -> int:
    store = ReferenceStore.load(_require_store(args))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        rows = ev.pca_rows(store)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    write_csv(args.out, ev.PCA_FIELDS, rows)
    print(f"wrote {len(rows)} projected points to {args.out}")
    return 0


# -- parser ----------------------------------------------------------------------

def _add_workload_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--workload", help="workload file from gen-workload (default: generate from --seed)")
    p.add_argument("--queries", type=int, default=3133, help="queries to generate when no --workload is given")
    p.add_argument("--templates", type=int, default=16)


def _add_mapping_flags(p: argparse.ArgumentParser, consistency: bool = True) -> None:
    p.add_argument("--n", type=int, default=16, help="voting neighbourhood size")
    p.add_argument("--k", type=int, default=16, help="consistency-check neighbourhood size")
    if consistency:
        p.add_argument("--consistency", choices=("on", "off"), default="on")


def _add_global_flags(p: argparse.ArgumentParser, suppress: str | None) -> None:
    def d(value: Any) -> Any:
        return suppress if suppress is not None else value

    p.add_argument("--seed", type=int, default=d(7), help="workload and fold-shuffle seed")
    p.add_argument("--provider", choices=("local", "remote"), default=d("local"))
    p.add_argument("--store", default=d(None), help="reference store file (JSONL)")
    p.add_argument("--embed-endpoint", default=d(None), help="remote embedding endpoint URL")
    p.add_argument("--embed-model", default=d(None), help="remote embedding model name")
    p.add_argument("--embed-auth-env", default=d("PLANMAP_EMBEDDING_TOKEN"),
                   help="environment variable holding the remote bearer token")
    p.add_argument("-v", "--verbose", action="store_true", default=d(False))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="planmap", description="Plan-embedding hint recommendation.")
    _add_global_flags(parser, None)
    # the same flags are accepted after the subcommand; SUPPRESS keeps the top-level value when absent
    common = argparse.ArgumentParser(add_help=False)
    _add_global_flags(common, argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-workload", parents=[common], help="generate a synthetic workload")
    p.add_argument("--queries", type=int, default=3133)
    p.add_argument("--templates", type=int, default=16)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_workload)

    p = sub.add_parser("build-store", parents=[common], help="search every query and write its reference triple")
    _add_workload_flags(p)
    p.add_argument("--workers", type=int, default=8)
    p.add_argument("--search-mode", choices=("sequential", "parallel", "simulated"), default="sequential")
    p.add_argument("--freq-out", help="write the hint-set frequency table as CSV")
    p.set_defaults(func=cmd_build_store)

    p = sub.add_parser("map", parents=[common], help="recommend a hint set for one plan")
    p.add_argument("--plan", help="plan document, or catalogue {query_id, plans: {bits: plan}}")
    p.add_argument("--workload")
    p.add_argument("--query-id")
    p.add_argument("--json", action="store_true", help="also print the decision as JSON")
    _add_mapping_flags(p)
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("run", parents=[common], help="run the online pipeline over a workload")
    _add_workload_flags(p)
    _add_mapping_flags(p)
    p.add_argument("--mode", choices=("full", "map-only"), default="full")
    p.add_argument("--timeout-ms", type=float, default=450_000.0)
    p.add_argument("--workers", type=int, default=8)
    p.add_argument("--search-mode", choices=("sequential", "parallel", "simulated"), default="sequential")
    p.add_argument("--report", help="write QueryReport records plus a summary line as JSONL")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("crossval", parents=[common], help="k-fold evaluation of plan mapping")
    _add_workload_flags(p)
    _add_mapping_flags(p)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--metric", choices=("embedding", "levenshtein"), default="embedding")
    p.add_argument("--policy", choices=("mapping", "oracle"), default="mapping")
    p.add_argument("--timeout-ms", type=float, default=ev.DEFAULT_TIMEOUT_MS)
    p.add_argument("--out-prefix", help="write <prefix>folds.csv, bands.csv, summary.csv, queries.csv")
    p.set_defaults(func=cmd_crossval)

    p = sub.add_parser("ablate", parents=[common], help="cross-validate retrieval metric x consistency check variants")
    _add_workload_flags(p)
    _add_mapping_flags(p, consistency=False)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--timeout-ms", type=float, default=ev.DEFAULT_TIMEOUT_MS)
    p.add_argument("--out", help="write the ablation table as CSV")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("pca", parents=[common], help="project default-plan embeddings onto two principal components")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pca)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (PlanMapError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
