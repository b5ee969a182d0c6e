from __future__ import annotations

import importlib
import random

import pytest
from hypothesis import given, strategies as st

from planmap import _pykernels, kernels

compiled = pytest.importorskip("planmap._ckernels")
short_text = st.text(alphabet="abcAB( )\\n", max_size=30)


def full_table_levenshtein(a: str, b: str) -> int:
    """Reference: fill the whole (|a|+1) x (|b|+1) table."""
    d = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(len(a) + 1):
        d[i][0] = i
    for j in range(len(b) + 1):
        d[0][j] = j
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            d[i][j] = min(d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + (a[i - 1] != b[j - 1]))
    return d[-1][-1]


@pytest.mark.parametrize("impl", [_pykernels, compiled], ids=["python", "compiled"])
def test_known_distances(impl):
    assert impl.levenshtein("kitten", "sitting") == 3
    assert impl.levenshtein("", "abc") == 3
    assert impl.levenshtein("plan", "plan") == 0


@pytest.mark.parametrize("impl", [_pykernels, compiled], ids=["python", "compiled"])
@given(a=short_text, b=short_text)
def test_levenshtein_matches_full_table(impl, a, b):
    assert impl.levenshtein(a, b) == full_table_levenshtein(a, b) == impl.levenshtein(b, a)


@pytest.mark.parametrize("impl", [_pykernels, compiled], ids=["python", "compiled"])
@given(a=short_text, b=short_text, bound=st.integers(0, 12))
def test_bounded_levenshtein(impl, a, b, bound):
    exact = full_table_levenshtein(a, b)
    got = impl.levenshtein_bounded(a, b, bound)
    if exact <= bound:
        assert got == exact
    else:
        assert got > bound


@given(st.text(max_size=60))
def test_stable_hash_parity(s):
    assert compiled.stable_hash(s) == _pykernels.stable_hash(s)


@given(st.text(max_size=80), st.lists(st.sampled_from(["HashJoin", "SeqScan", "Sort"]), max_size=5),
       st.sampled_from([1, 7, 256]), st.integers(1, 4))
def test_hashed_counts_parity(text, tokens, dim, ngram):
    a = list(compiled.hashed_counts(text, tokens, dim, ngram, 4))
    b = list(_pykernels.hashed_counts(text, tokens, dim, ngram, 4))
    assert a == b


def test_stable_hash_known_value():
    # FNV-1a 64 of the empty string, passed through the splitmix64 finalizer
    assert _pykernels.stable_hash("") == compiled.stable_hash("")
    assert _pykernels.stable_hash("abc") != _pykernels.stable_hash("acb")


def test_backend_selection(monkeypatch):
    assert kernels.BACKEND == "compiled"
    monkeypatch.setenv("PLANMAP_PURE_PYTHON", "1")
    try:
        fallback = importlib.reload(kernels)
        assert fallback.BACKEND == "python"
        assert fallback.levenshtein is _pykernels.levenshtein
    finally:
        monkeypatch.delenv("PLANMAP_PURE_PYTHON")
        importlib.reload(kernels)
    assert kernels.BACKEND == "compiled"


def test_parity_on_plan_sized_strings():
    rng = random.Random(0)
    alphabet = "HashJoinSeqScan()\n  "
    for _ in range(50):
        a = "".join(rng.choice(alphabet) for _ in range(rng.randint(50, 300)))
        b = "".join(rng.choice(alphabet) for _ in range(rng.randint(50, 300)))
        assert compiled.levenshtein(a, b) == _pykernels.levenshtein(a, b)
