"""Selects the compiled kernels when available, else the pure-Python ones.

Set ``PLANMAP_PURE_PYTHON=1`` to force the fallback.
"""
from __future__ import annotations

import os

from . import _pykernels

if os.environ.get("PLANMAP_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _pykernels

BACKEND = "compiled" if _impl is not _pykernels else "python"

stable_hash = _impl.stable_hash
hashed_counts = _impl.hashed_counts
levenshtein = _impl.levenshtein
levenshtein_bounded = _impl.levenshtein_bounded
