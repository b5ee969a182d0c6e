"""Compiled vs pure-Python kernels on realistic plan texts.

    python3 benchmarks/bench_kernels.py [--queries 200] [--repeat 5]

Plan texts come from a seeded synthetic workload, so the string lengths match
what the store and the embedder see in practice.
"""
from __future__ import annotations

import argparse
import random
import timeit

from planmap import _pykernels
from planmap.embedding import _OP_TOKEN_RE
from planmap.hints import DEFAULT
from planmap.plan import render_plan_text
from planmap.synthetic import SyntheticDB, generate_workload

try:
    from planmap import _ckernels
except ImportError:  # pragma: no cover - extension not built
    _ckernels = None


def plan_texts(n: int) -> list[str]:
    wl = generate_workload(7, n_queries=max(n, 16))[:n]
    db = SyntheticDB.for_workload(7)
    return [render_plan_text(db.plan(q, DEFAULT)) for q in wl]


def cases(texts: list[str]) -> dict[str, tuple]:
    rng = random.Random(0)
    pairs = [(rng.choice(texts), rng.choice(texts)) for _ in range(200)]
    tokens = [_OP_TOKEN_RE.findall(t) for t in texts]
    return {
        "levenshtein": (lambda k: [k.levenshtein(a, b) for a, b in pairs], len(pairs)),
        "levenshtein_bounded(20)": (lambda k: [k.levenshtein_bounded(a, b, 20) for a, b in pairs], len(pairs)),
        "hashed_counts": (lambda k: [k.hashed_counts(t, tok, 256, 3, 4) for t, tok in zip(texts, tokens)], len(texts)),
        "stable_hash": (lambda k: [k.stable_hash(t) for t in texts], len(texts)),
    }


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--queries", type=int, default=200)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    texts = plan_texts(args.queries)
    print(f"{len(texts)} plan texts, mean length {sum(map(len, texts)) / len(texts):.0f} chars")
    if _ckernels is None:
        print("compiled kernels are not built; only the pure-Python timings are shown")
    print(f"{'kernel':<26}{'python us/call':>16}{'compiled us/call':>18}{'speedup':>10}")
    for name, (fn, calls) in cases(texts).items():
        py = min(timeit.repeat(lambda: fn(_pykernels), number=1, repeat=args.repeat)) / calls * 1e6
        if _ckernels is None:
            print(f"{name:<26}{py:>16.1f}{'-':>18}{'-':>10}")
            continue
        assert [list(x) if hasattr(x, "__len__") else x for x in fn(_pykernels)] == \
            [list(x) if hasattr(x, "__len__") else x for x in fn(_ckernels)], name
        c = min(timeit.repeat(lambda: fn(_ckernels), number=1, repeat=args.repeat)) / calls * 1e6
        print(f"{name:<26}{py:>16.1f}{c:>18.2f}{py / c:>9.0f}x")


if __name__ == "__main__":
    main()
