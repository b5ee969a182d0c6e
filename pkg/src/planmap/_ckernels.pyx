# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the functions in ``_pykernels``; results are bit-identical."""
from libc.stdint cimport uint64_t, int64_t
from libc.stdlib cimport malloc, free

import numpy as np
cimport numpy as cnp

cnp.import_array()

cdef uint64_t FNV_OFFSET = 0xCBF29CE484222325ULL
cdef uint64_t FNV_PRIME = 0x100000001B3ULL
TOKEN_PREFIX = "\x00tok:"


cdef inline uint64_t _finish(uint64_t h) noexcept nogil:
    h = (h ^ (h >> 30)) * 0xBF58476D1CE4E5B9ULL
    h = (h ^ (h >> 27)) * 0x94D049BB133111EBULL
    return h ^ (h >> 31)


cdef inline uint64_t _hash_slice(str s, Py_ssize_t start, Py_ssize_t stop):
    cdef uint64_t h = FNV_OFFSET
    cdef Py_ssize_t i
    for i in range(start, stop):
        h = (h ^ <uint64_t>(<Py_UCS4>s[i])) * FNV_PRIME
    return _finish(h)


def stable_hash(str s):
    return _hash_slice(s, 0, len(s))


cdef inline void _add(int64_t[::1] counts, uint64_t h, int64_t dim, int64_t weight) noexcept:
    if h >> 63:
        counts[<Py_ssize_t>(h % <uint64_t>dim)] -= weight
    else:
        counts[<Py_ssize_t>(h % <uint64_t>dim)] += weight


def hashed_counts(str text, list tokens, int dim, int ngram, int token_weight):
    out = np.zeros(dim, dtype=np.int64)
    cdef int64_t[::1] counts = out
    cdef Py_ssize_t n = len(text)
    cdef Py_ssize_t i
    if n < ngram:
        if n:
            _add(counts, _hash_slice(text, 0, n), dim, 1)
    else:
        for i in range(n - ngram + 1):
            _add(counts, _hash_slice(text, i, i + ngram), dim, 1)
    cdef str feature
    for tok in tokens:
        feature = TOKEN_PREFIX + tok
        _add(counts, _hash_slice(feature, 0, len(feature)), dim, token_weight)
    return out


cdef Py_ssize_t _lev(str a, str b, Py_ssize_t max_dist):
    # a is the longer string; max_dist < 0 disables the cutoff
    cdef Py_ssize_t la = len(a), lb = len(b)
    cdef Py_ssize_t i, j, v, row_min, sub
    cdef Py_UCS4 ca
    if lb == 0:
        return la
    cdef Py_UCS4* bb = <Py_UCS4*>malloc(lb * sizeof(Py_UCS4))
    cdef Py_ssize_t* prev = <Py_ssize_t*>malloc((lb + 1) * sizeof(Py_ssize_t))
    cdef Py_ssize_t* cur = <Py_ssize_t*>malloc((lb + 1) * sizeof(Py_ssize_t))
    cdef Py_ssize_t* tmp
    if bb == NULL or prev == NULL or cur == NULL:
        free(bb); free(prev); free(cur)
        raise MemoryError()
    try:
        for j in range(lb):
            bb[j] = b[j]
        for j in range(lb + 1):
            prev[j] = j
        for i in range(1, la + 1):
            ca = a[i - 1]
            cur[0] = i
            row_min = i
            for j in range(1, lb + 1):
                sub = prev[j - 1] + (ca != bb[j - 1])
                v = prev[j] + 1
                if cur[j - 1] + 1 < v:
                    v = cur[j - 1] + 1
                if sub < v:
                    v = sub
                cur[j] = v
                if v < row_min:
                    row_min = v
            if max_dist >= 0 and row_min > max_dist:
                return max_dist + 1
            tmp = prev
            prev = cur
            cur = tmp
        return prev[lb]
    finally:
        free(bb)
        free(prev)
        free(cur)


cdef tuple _trim(str a, str b):
    # shared prefix and suffix never change the distance
    cdef Py_ssize_t la = len(a), lb = len(b), lo = 0, hi = 0
    cdef Py_ssize_t m = la if la < lb else lb
    while lo < m and a[lo] == b[lo]:
        lo += 1
    while hi < m - lo and a[la - 1 - hi] == b[lb - 1 - hi]:
        hi += 1
    a = a[lo:la - hi]
    b = b[lo:lb - hi]
    if len(a) < len(b):
        return b, a
    return a, b


def levenshtein(str a, str b):
    a, b = _trim(a, b)
    return _lev(a, b, -1)


def levenshtein_bounded(str a, str b, Py_ssize_t max_dist):
    if abs(len(a) - len(b)) > max_dist:
        return max_dist + 1
    a, b = _trim(a, b)
    return _lev(a, b, max_dist)
