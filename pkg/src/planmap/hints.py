"""The seven boolean optimizer knobs and the canonical tie-breaking rule.

A set bit disables the corresponding operator; the all-zero vector is the
default configuration with every operator enabled.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from .errors import EmptyCandidateSet, NonBinaryCharacter, WrongLength

HINT_NAMES: tuple[str, ...] = (
    "nestloop",
    "hashjoin",
    "mergejoin",
    "seqscan",
    "indexscan",
    "indexonlyscan",
    "bitmapscan",
)
N_HINTS = len(HINT_NAMES)

# operator token controlled by each flag, same order as HINT_NAMES
HINT_OPERATORS: tuple[str, ...] = (
    "NestLoop",
    "HashJoin",
    "MergeJoin",
    "SeqScan",
    "IndexScan",
    "IndexOnlyScan",
    "BitmapScan",
)


@dataclass(frozen=True, order=False)
class HintSet:
    flags: tuple[bool, ...]

    def __post_init__(self) -> None:
        if len(self.flags) != N_HINTS:
            raise WrongLength(f"hint set needs {N_HINTS} flags, got {len(self.flags)}")
        object.__setattr__(self, "flags", tuple(bool(f) for f in self.flags))

    @classmethod
    def default(cls) -> HintSet:
        return DEFAULT

    @classmethod
    def from_disabled(cls, *operators: str) -> HintSet:
        """Build a hint set disabling the named knobs (``"seqscan"``) or operators (``"SeqScan"``)."""
        flags = [False] * N_HINTS
        for op in operators:
            if op in HINT_NAMES:
                flags[HINT_NAMES.index(op)] = True
            elif op in HINT_OPERATORS:
                flags[HINT_OPERATORS.index(op)] = True
            else:
                raise ValueError(f"unknown hint {op!r}")
        return cls(tuple(flags))

    @property
    def is_default(self) -> bool:
        return not any(self.flags)

    @property
    def bits(self) -> str:
        return format_bits(self)

    def disables(self, operator: str) -> bool:
        """Accepts a knob name (``"seqscan"``) or an operator name (``"SeqScan"``)."""
        if operator in HINT_NAMES:
            return self.flags[HINT_NAMES.index(operator)]
        return self.flags[HINT_OPERATORS.index(operator)]

    def __str__(self) -> str:
        return self.bits

    def __repr__(self) -> str:
        return f"HintSet({self.bits!r})"


DEFAULT = HintSet((False,) * N_HINTS)


def parse_bits(text: str) -> HintSet:
    if len(text) != N_HINTS:
        raise WrongLength(f"expected {N_HINTS} characters, got {len(text)}: {text!r}")
    bad = [c for c in text if c not in "01"]
    if bad:
        raise NonBinaryCharacter(f"non-binary character {bad[0]!r} in {text!r}")
    return HintSet(tuple(c == "1" for c in text))


def format_bits(h: HintSet) -> str:
    return "".join("1" if f else "0" for f in h.flags)


def enumerate_all() -> list[HintSet]:
    """All 128 hint sets in ascending bitstring order (default first)."""
    return [parse_bits(format(i, f"0{N_HINTS}b")) for i in range(2**N_HINTS)]


def disabled_count(h: HintSet) -> int:
    return sum(h.flags)


def canonical_key(h: HintSet) -> tuple[int, str]:
    return disabled_count(h), format_bits(h)


def canonicalize(candidates: Iterable[HintSet]) -> HintSet:
    """Pick the hint set disabling the fewest operators; ties go to the smallest bitstring.

    Callers pass hint sets that all produce the same plan.
    """
    pool = list(candidates)
    if not pool:
        raise EmptyCandidateSet("cannot canonicalize an empty candidate set")
    return min(pool, key=canonical_key)
