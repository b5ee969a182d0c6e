"""Plan-text encoders and the distances used for neighbour retrieval.

Two providers are available. ``LocalHashingProvider`` is deterministic and
offline: signed feature hashing of character 3-grams plus operator-name tokens,
L2-normalised. ``RemoteProvider`` speaks a generic hosted-embedding protocol::

    POST <endpoint>  {"model": "<name>", "input": ["text", ...]}
    200              {"data": [{"index": 0, "embedding": [0.1, ...]}, ...]}
"""
from __future__ import annotations

import functools
import logging
import math
import os
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, Literal, Protocol, Sequence

import httpx
import numpy as np

from . import kernels
from .errors import DimensionMismatch, EmptyText, RemoteSchemaError, RemoteUnavailable

log = logging.getLogger(__name__)

EmbeddingVector = np.ndarray

_OP_TOKEN_RE = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)", re.MULTILINE)


@dataclass(frozen=True)
class ProviderConfig:
    kind: Literal["local", "remote"] = "local"
    dimension: int = 256
    endpoint: str | None = None
    model_name: str | None = None
    auth_env_var: str = "PLANMAP_EMBEDDING_TOKEN"
    batch_size: int = 64
    max_retries: int = 3
    timeout_s: float = 30.0
    concurrency: int = 4

    def __post_init__(self) -> None:
        if self.kind not in ("local", "remote"):
            raise ValueError(f"unknown provider kind {self.kind!r}")
        if self.dimension <= 0 or self.batch_size <= 0:
            raise ValueError("dimension and batch_size must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.kind == "remote" and (not self.endpoint or not self.model_name):
            raise ValueError("remote provider requires endpoint and model_name")


class EmbeddingProvider(Protocol):
    dimension: int

    def embed(self, text: str) -> Any: ...

    def embed_many(self, texts: Sequence[str]) -> list[Any]: ...


class LocalHashingProvider:
    """Deterministic bag-of-features encoder for rendered plan text."""

    def __init__(self, dimension: int = 256, ngram: int = 3, token_weight: int = 4, cache_size: int = 65536):
        if dimension <= 0:
            raise ValueError("dimension must be positive")
        self.dimension = dimension
        self.ngram = ngram
        self.token_weight = token_weight
        self._cached = functools.lru_cache(maxsize=cache_size)(self._compute)

    def _compute(self, text: str) -> np.ndarray:
        tokens = _OP_TOKEN_RE.findall(text)
        counts = np.asarray(
            kernels.hashed_counts(text, tokens, self.dimension, self.ngram, self.token_weight),
            dtype=np.float64,
        )
        norm = math.sqrt(float(np.dot(counts, counts)))
        if norm == 0.0:
            # every feature cancelled out; pick a fixed unit vector
            counts[0] = 1.0
            norm = 1.0
        vec = counts / norm
        vec.flags.writeable = False
        return vec

    def embed(self, text: str) -> np.ndarray:
        if not text:
            raise EmptyText("cannot embed empty text")
        return self._cached(text)

    def embed_many(self, texts: Sequence[str]) -> list[np.ndarray]:
        return [self.embed(t) for t in texts]


class PlanTextProvider:
    """Identity 'encoder' used when neighbours are ranked by edit distance over plan text."""

    dimension = 0

    def embed(self, text: str) -> str:
        if not text:
            raise EmptyText("cannot embed empty text")
        return text

    def embed_many(self, texts: Sequence[str]) -> list[str]:
        return [self.embed(t) for t in texts]


class RemoteProvider:
    """Batched, retrying client for a hosted embedding endpoint.

    Batches are sent concurrently; each response is validated and re-ordered by
    its ``index`` field before being stitched back into input order.
    """

    def __init__(
        self,
        config: ProviderConfig,
        client: httpx.Client | None = None,
        sleep: Callable[[float], None] = time.sleep,
        backoff_s: float = 0.5,
    ):
        if config.kind != "remote":
            raise ValueError("RemoteProvider needs a remote ProviderConfig")
        self.config = config
        self.dimension = config.dimension
        self._client = client or httpx.Client(timeout=config.timeout_s)
        self._sleep = sleep
        self._backoff_s = backoff_s

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.config.auth_env_var)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def _post(self, batch: Sequence[str]) -> Any:
        body = {"model": self.config.model_name, "input": list(batch)}
        last_error: Exception | None = None
        for attempt in range(self.config.max_retries + 1):
            if attempt:
                self._sleep(self._backoff_s * 2 ** (attempt - 1))
            try:
                resp = self._client.post(self.config.endpoint, json=body, headers=self._headers())
            except httpx.HTTPError as exc:
                last_error = exc
                log.warning("embedding request failed (attempt %d): %s", attempt + 1, exc)
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last_error = RemoteUnavailable(f"HTTP {resp.status_code}")
                log.warning("embedding endpoint returned %d (attempt %d)", resp.status_code, attempt + 1)
                continue
            if resp.status_code >= 400:
                raise RemoteUnavailable(f"HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                return resp.json()
            except ValueError as exc:
                raise RemoteSchemaError(f"response is not JSON: {exc}") from exc
        raise RemoteUnavailable(
            f"embedding endpoint unavailable after {self.config.max_retries + 1} attempts: {last_error}"
        )

    def _validate(self, payload: Any, n: int) -> list[np.ndarray]:
        if not isinstance(payload, dict) or not isinstance(payload.get("data"), list):
            raise RemoteSchemaError("response must be an object with a 'data' array")
        rows = payload["data"]
        if len(rows) != n:
            raise RemoteSchemaError(f"expected {n} embeddings, got {len(rows)}")
        out: list[np.ndarray | None] = [None] * n
        for row in rows:
            if not isinstance(row, dict):
                raise RemoteSchemaError("each data entry must be an object")
            idx, emb = row.get("index"), row.get("embedding")
            if isinstance(idx, bool) or not isinstance(idx, int) or not 0 <= idx < n or out[idx] is not None:
                raise RemoteSchemaError(f"bad or duplicate index {idx!r}")
            if not isinstance(emb, list) or not emb or not all(
                isinstance(x, (int, float)) and not isinstance(x, bool) for x in emb
            ):
                raise RemoteSchemaError(f"embedding {idx} must be a non-empty array of numbers")
            vec = np.asarray(emb, dtype=np.float64)
            if not np.all(np.isfinite(vec)):
                raise RemoteSchemaError(f"embedding {idx} has non-finite entries")
            if vec.shape[0] != self.dimension:
                raise RemoteSchemaError(f"embedding {idx} has dimension {vec.shape[0]}, expected {self.dimension}")
            vec.flags.writeable = False
            out[idx] = vec
        return out  # type: ignore[return-value]

    def embed_many(self, texts: Sequence[str]) -> list[np.ndarray]:
        if any(not t for t in texts):
            raise EmptyText("cannot embed empty text")
        size = self.config.batch_size
        batches = [texts[i:i + size] for i in range(0, len(texts), size)]
        if len(batches) <= 1 or self.config.concurrency <= 1:
            results = [self._validate(self._post(b), len(b)) for b in batches]
        else:
            with ThreadPoolExecutor(max_workers=self.config.concurrency) as pool:
                results = list(pool.map(lambda b: self._validate(self._post(b), len(b)), batches))
        return [vec for batch in results for vec in batch]

    def embed(self, text: str) -> np.ndarray:
        return self.embed_many([text])[0]

    def close(self) -> None:
        self._client.close()


def make_provider(config: ProviderConfig, **kwargs: Any) -> EmbeddingProvider:
    if config.kind == "local":
        return LocalHashingProvider(config.dimension)
    return RemoteProvider(config, **kwargs)


def embed_text(provider: EmbeddingProvider, text: str) -> Any:
    if not text:
        raise EmptyText("cannot embed empty text")
    return provider.embed(text)


def euclidean_distance(u: Sequence[float], v: Sequence[float]) -> float:
    a = np.asarray(u, dtype=np.float64)
    b = np.asarray(v, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"dimension mismatch: {a.shape} vs {b.shape}")
    diff = a - b
    return math.sqrt(float(np.dot(diff, diff)))


def levenshtein_distance(a: str, b: str) -> int:
    """Minimum number of single-character insertions, deletions or substitutions."""
    return kernels.levenshtein(a, b)
