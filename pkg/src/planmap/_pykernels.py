"""Pure-Python kernels. The compiled ``_ckernels`` module mirrors these exactly."""
from __future__ import annotations

_MASK = 0xFFFFFFFFFFFFFFFF
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
TOKEN_PREFIX = "\x00tok:"


def stable_hash(s: str) -> int:
    """FNV-1a over code points followed by a splitmix64 finalizer."""
    h = _FNV_OFFSET
    for ch in s:
        h = ((h ^ ord(ch)) * _FNV_PRIME) & _MASK
    h = ((h ^ (h >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    h = ((h ^ (h >> 27)) * 0x94D049BB133111EB) & _MASK
    return h ^ (h >> 31)


def _add(counts: list[int], feature: str, dim: int, weight: int) -> None:
    h = stable_hash(feature)
    if h >> 63:
        counts[h % dim] -= weight
    else:
        counts[h % dim] += weight


def hashed_counts(text: str, tokens: list[str], dim: int, ngram: int, token_weight: int) -> list[int]:
    """Signed bucket counts for character n-grams of ``text`` plus weighted ``tokens``."""
    counts = [0] * dim
    if len(text) < ngram:
        if text:
            _add(counts, text, dim, 1)
    else:
        for i in range(len(text) - ngram + 1):
            _add(counts, text[i:i + ngram], dim, 1)
    for tok in tokens:
        _add(counts, TOKEN_PREFIX + tok, dim, token_weight)
    return counts


def _trim(a: str, b: str) -> tuple[str, str]:
    # shared prefix and suffix never change the distance; returns (longer, shorter)
    m = min(len(a), len(b))
    lo = 0
    while lo < m and a[lo] == b[lo]:
        lo += 1
    hi = 0
    while hi < m - lo and a[len(a) - 1 - hi] == b[len(b) - 1 - hi]:
        hi += 1
    a, b = a[lo:len(a) - hi], b[lo:len(b) - hi]
    return (a, b) if len(a) >= len(b) else (b, a)


def levenshtein(a: str, b: str) -> int:
    a, b = _trim(a, b)
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i] + [0] * len(b)
        for j, cb in enumerate(b, 1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb))
        prev = cur
    return prev[-1]


def levenshtein_bounded(a: str, b: str, max_dist: int) -> int:
    """Exact distance when it is <= ``max_dist``; otherwise any value > ``max_dist``."""
    if abs(len(a) - len(b)) > max_dist:
        return max_dist + 1
    a, b = _trim(a, b)
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i] + [0] * len(b)
        row_min = i
        for j, cb in enumerate(b, 1):
            v = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb))
            cur[j] = v
            if v < row_min:
                row_min = v
        if row_min > max_dist:
            return max_dist + 1
        prev = cur
    return prev[-1]
