"""Regenerate tests/data/reference_results.json for the reference seed.

    python3 scripts/reference_results.py [--seed 7] [--out tests/data/reference_results.json]

Takes a few minutes on one core; the Levenshtein ablation variants dominate.
"""
from __future__ import annotations

import argparse
import json
import time
from pathlib import Path

import numpy as np

from planmap import __version__
from planmap import evaluation as ev
from planmap.mapping import MappingParams
from planmap.synthetic import MS_PER_UNIT, SyntheticDB, generate_workload


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--out", default="tests/data/reference_results.json")
    args = ap.parse_args()

    started = time.perf_counter()
    queries = generate_workload(args.seed)
    db = SyntheticDB.for_workload(args.seed)
    facts = ev.collect_facts(queries, db)
    mapped = ev.crossval(facts, db, folds=10, params=MappingParams(16, 16))
    oracle = ev.crossval(facts, db, folds=10, policy="oracle")
    ablation = ev.ablate(facts, db)
    max_ach = oracle.summary["total_speedup_pct"]

    doc = {
        "seed": args.seed,
        "package_version": __version__,
        "command": "python3 scripts/reference_results.py --seed %d" % args.seed,
        "cli_equivalents": [
            "planmap --seed %d crossval --folds 10 --n 16 --k 16 --consistency on" % args.seed,
            "planmap --seed %d crossval --folds 10 --policy oracle" % args.seed,
            "planmap --seed %d ablate" % args.seed,
        ],
        "workload": {
            "queries": len(queries),
            "templates": 16,
            "default_optimal_fraction": float(np.mean([f.best_hints.is_default for f in facts])),
            "defaults_over_timeout": int(sum(f.default_ms > ev.DEFAULT_TIMEOUT_MS for f in facts)),
            "ms_per_cost_unit": MS_PER_UNIT,
            "frequency_table": ev.frequency_table(f.best_hints for f in facts),
        },
        "timeout_ms": ev.DEFAULT_TIMEOUT_MS,
        "mapping_quality": {
            "summary": mapped.summary,
            "max_achievable_speedup_pct": max_ach,
            "ratio_to_max_achievable": mapped.summary["total_speedup_pct"] / max_ach,
            "ratio_threshold": 0.5,
            "regressions_over_2x": len(mapped.regressions()),
            "timeouts": mapped.n_timeouts,
            "bands": [b.__dict__ for b in mapped.bands],
        },
        "ablation": ablation,
        "elapsed_s": round(time.perf_counter() - started, 1),
    }
    Path(args.out).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    print(json.dumps({k: doc[k] for k in ("seed", "mapping_quality", "ablation")}, indent=2, default=str)[:3000])


if __name__ == "__main__":
    main()
