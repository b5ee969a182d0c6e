"""Experience store of reference triples with exact k-nearest-neighbour search.

File format: one JSON object per line::

    {"query_id": "t03-000017", "d_vec": [...], "d_fingerprint": "ab12...",
     "h_star": "0001100", "o_vec": [...], "t_def": 5120.5, "t_opt": 1733.25}

With the ``levenshtein`` metric the two vectors are plan texts instead of float arrays.
"""
from __future__ import annotations

import bisect
import json
import math
import os
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterator, Literal, Sequence

import numpy as np

from . import kernels
from .errors import CorruptRecord, DimensionMismatch, EmptyStore, InvariantViolation, PlanMapError
from .hints import HintSet, format_bits, parse_bits
from .plan import PlanFingerprint

Metric = Literal["euclidean", "levenshtein"]


@dataclass(frozen=True, eq=False)
class ReferenceTriple:
    query_id: str
    d_vec: Any
    d_fingerprint: PlanFingerprint
    h_star: HintSet
    o_vec: Any
    t_def: float
    t_opt: float

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ReferenceTriple):
            return NotImplemented
        return (
            self.query_id == other.query_id
            and _same_vec(self.d_vec, other.d_vec)
            and self.d_fingerprint == other.d_fingerprint
            and self.h_star == other.h_star
            and _same_vec(self.o_vec, other.o_vec)
            and self.t_def == other.t_def
            and self.t_opt == other.t_opt
        )

    __hash__ = None  # type: ignore[assignment]

    def validate(self) -> None:
        if not (self.t_def > 0 and self.t_opt > 0) or not (math.isfinite(self.t_def) and math.isfinite(self.t_opt)):
            raise InvariantViolation(f"{self.query_id}: latencies must be positive and finite")
        if self.t_opt > self.t_def:
            raise InvariantViolation(f"{self.query_id}: t_opt {self.t_opt} exceeds t_def {self.t_def}")
        if self.h_star.is_default and (not _same_vec(self.d_vec, self.o_vec) or self.t_opt != self.t_def):
            raise InvariantViolation(f"{self.query_id}: default-optimal triple must have o_vec == d_vec and t_opt == t_def")
        for vec in (self.d_vec, self.o_vec):
            if isinstance(vec, str):
                if not vec:
                    raise InvariantViolation(f"{self.query_id}: empty plan text")
            elif not np.all(np.isfinite(np.asarray(vec, dtype=np.float64))):
                raise InvariantViolation(f"{self.query_id}: non-finite embedding entry")


def _same_vec(a: Any, b: Any) -> bool:
    if isinstance(a, str) or isinstance(b, str):
        return a == b
    return np.array_equal(np.asarray(a), np.asarray(b))


@dataclass(frozen=True)
class Neighbor:
    triple: ReferenceTriple
    distance: float
    rank: int  # insertion position in the store


class _Snapshot:
    __slots__ = ("triples", "d_mat", "o_mat", "d_groups", "o_groups")

    def __init__(self, triples: tuple[ReferenceTriple, ...], metric: Metric):
        self.triples = triples
        self.d_mat = self.o_mat = None
        self.d_groups = self.o_groups = None
        if metric == "euclidean" and triples:
            self.d_mat = np.vstack([np.asarray(t.d_vec, dtype=np.float64) for t in triples])
            self.o_mat = np.vstack([np.asarray(t.o_vec, dtype=np.float64) for t in triples])
        elif metric == "levenshtein":
            self.d_groups = _group_texts([t.d_vec for t in triples])
            self.o_groups = _group_texts([t.o_vec for t in triples])


def _group_texts(texts: Sequence[str]) -> list[tuple[str, list[int]]]:
    groups: dict[str, list[int]] = {}
    for i, text in enumerate(texts):
        groups.setdefault(text, []).append(i)
    return list(groups.items())


class ReferenceStore:
    """Exact linear-scan k-NN over default-plan and optimized-plan representations.

    Ties in distance are broken by insertion order. Inserts are serialized and
    readers work on an immutable snapshot, so knn calls always see a
    consistent state.
    """

    def __init__(self, dimension: int | None = None, metric: Metric = "euclidean",
                 distance_cache: dict | None = None):
        if metric not in ("euclidean", "levenshtein"):
            raise ValueError(f"unknown metric {metric!r}")
        self.metric: Metric = metric
        self.dimension = dimension
        self._triples: list[ReferenceTriple] = []
        self._lock = threading.Lock()
        self._snapshot: _Snapshot | None = None
        # (query text, stored text) -> exact edit distance; may be shared between stores
        self._lev_cache = distance_cache if distance_cache is not None else {}

    def __len__(self) -> int:
        return len(self._triples)

    def __iter__(self) -> Iterator[ReferenceTriple]:
        return iter(tuple(self._triples))

    @property
    def triples(self) -> tuple[ReferenceTriple, ...]:
        return tuple(self._triples)

    def _check_vec(self, vec: Any, what: str) -> None:
        if self.metric == "levenshtein":
            if not isinstance(vec, str):
                raise DimensionMismatch(f"{what}: levenshtein store expects plan text")
            return
        if isinstance(vec, str):
            raise DimensionMismatch(f"{what}: euclidean store expects a vector")
        arr = np.asarray(vec)
        if arr.ndim != 1 or (self.dimension is not None and arr.shape[0] != self.dimension):
            raise DimensionMismatch(f"{what}: expected dimension {self.dimension}, got {arr.shape}")

    def insert(self, triple: ReferenceTriple) -> None:
        with self._lock:
            self._check_vec(triple.d_vec, "d_vec")
            self._check_vec(triple.o_vec, "o_vec")
            if self.metric == "euclidean" and np.asarray(triple.d_vec).shape != np.asarray(triple.o_vec).shape:
                raise DimensionMismatch("d_vec and o_vec differ in dimension")
            triple.validate()
            if self.metric == "euclidean" and self.dimension is None:
                self.dimension = int(np.asarray(triple.d_vec).shape[0])
            self._triples.append(triple)
            self._snapshot = None

    def extend(self, triples: Sequence[ReferenceTriple]) -> None:
        for t in triples:
            self.insert(t)

    def snapshot(self) -> _Snapshot:
        with self._lock:
            if self._snapshot is None:
                self._snapshot = _Snapshot(tuple(self._triples), self.metric)
            return self._snapshot

    def knn_default(self, q: Any, k: int) -> list[Neighbor]:
        return self._knn(q, k, optimized=False)

    def knn_optimized(self, q: Any, k: int) -> list[Neighbor]:
        return self._knn(q, k, optimized=True)

    def _knn(self, q: Any, k: int, optimized: bool) -> list[Neighbor]:
        if k < 1:
            raise ValueError("k must be >= 1")
        snap = self.snapshot()
        if not snap.triples:
            raise EmptyStore("reference store is empty")
        self._check_vec(q, "query")
        if self.metric == "euclidean":
            mat = snap.o_mat if optimized else snap.d_mat
            diff = mat - np.asarray(q, dtype=np.float64)
            dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
            order = np.argsort(dist, kind="stable")[:k]
            return [Neighbor(snap.triples[i], float(dist[i]), int(i)) for i in order]
        groups = snap.o_groups if optimized else snap.d_groups
        ranked = self._levenshtein_rank(q, groups, k)
        return [Neighbor(snap.triples[i], float(d), i) for d, i in ranked]

    def _levenshtein_rank(self, q: str, groups: list[tuple[str, list[int]]], k: int) -> list[tuple[int, int]]:
        # visit distinct texts by their length lower bound; stop once it exceeds the k-th best
        by_bound = sorted(range(len(groups)), key=lambda g: abs(len(groups[g][0]) - len(q)))
        found: list[tuple[int, int]] = []  # (distance, group)
        best: list[int] = []  # sorted distances, one entry per stored triple (capped at k)
        cache = self._lev_cache
        for g in by_bound:
            text, members = groups[g]
            bound = best[k - 1] if len(best) >= k else None
            if bound is not None and abs(len(text) - len(q)) > bound:
                break
            key = (q, text) if q <= text else (text, q)
            # cached values >= 0 are exact; negative values -m mean "distance >= m"
            d = cache.get(key)
            if d is not None and d < 0:
                if bound is not None and -d > bound:
                    continue
                d = None
            if d is None:
                if bound is None:
                    d = kernels.levenshtein(q, text)
                else:
                    d = kernels.levenshtein_bounded(q, text, bound)
                    if d > bound:
                        cache[key] = -(bound + 1)
                        continue
                cache[key] = d
            elif bound is not None and d > bound:
                continue
            found.append((d, g))
            for _ in range(min(len(members), k)):
                bisect.insort(best, d)
            del best[k:]
        ranked = sorted((d, i) for d, g in found for i in groups[g][1])
        return ranked[:k]

    def save(self, path: str | os.PathLike) -> None:
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            for t in self.triples:
                fh.write(json.dumps(triple_to_record(t), separators=(",", ":")) + "\n")
        os.replace(tmp, path)

    def append_to(self, path: str | os.PathLike, triple: ReferenceTriple) -> None:
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(triple_to_record(triple), separators=(",", ":")) + "\n")

    @classmethod
    def load(cls, path: str | os.PathLike, metric: Metric | None = None) -> ReferenceStore:
        path = Path(path)
        store: ReferenceStore | None = None if metric is None else cls(metric=metric)
        try:
            fh = open(path, encoding="utf-8")
        except OSError as exc:
            raise PlanMapError(f"cannot read store {path}: {exc}") from exc
        with fh:
            for line_no, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    triple = record_to_triple(json.loads(line))
                except (ValueError, KeyError, TypeError) as exc:
                    reason = str(exc) if line.endswith("\n") else f"truncated record: {exc}"
                    raise CorruptRecord(path, line_no, reason) from exc
                if store is None:
                    store = cls(metric="levenshtein" if isinstance(triple.d_vec, str) else "euclidean")
                try:
                    store.insert(triple)
                except PlanMapError as exc:
                    raise CorruptRecord(path, line_no, str(exc)) from exc
        return store if store is not None else cls()


def _vec_to_json(vec: Any) -> Any:
    return vec if isinstance(vec, str) else [float(x) for x in np.asarray(vec, dtype=np.float64)]


def _vec_from_json(value: Any) -> Any:
    if isinstance(value, str):
        return value
    if not isinstance(value, list):
        raise TypeError("vector must be an array of numbers or a plan text")
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError("vector must be one-dimensional")
    arr.flags.writeable = False
    return arr


def triple_to_record(t: ReferenceTriple) -> dict[str, Any]:
    return {
        "query_id": t.query_id,
        "d_vec": _vec_to_json(t.d_vec),
        "d_fingerprint": t.d_fingerprint.digest,
        "h_star": format_bits(t.h_star),
        "o_vec": _vec_to_json(t.o_vec),
        "t_def": float(t.t_def),
        "t_opt": float(t.t_opt),
    }


def record_to_triple(rec: dict[str, Any]) -> ReferenceTriple:
    if not isinstance(rec, dict):
        raise TypeError("record must be an object")
    return ReferenceTriple(
        query_id=str(rec["query_id"]),
        d_vec=_vec_from_json(rec["d_vec"]),
        d_fingerprint=PlanFingerprint(str(rec["d_fingerprint"])),
        h_star=parse_bits(rec["h_star"]),
        o_vec=_vec_from_json(rec["o_vec"]),
        t_def=float(rec["t_def"]),
        t_opt=float(rec["t_opt"]),
    )
