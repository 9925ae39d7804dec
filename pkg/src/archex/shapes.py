"""Tensor shapes and the two tensor-kind classes the builder knows about."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ShapeError

FLAT_VECTOR = "flat-vector"
CHANNELLED_SEQUENCE = "channelled-sequence"

_KIND_BY_RANK = {1: FLAT_VECTOR, 2: CHANNELLED_SEQUENCE}


@dataclass(frozen=True)
class TensorShape:
    """Ordered positive extents plus a kind tag derived from the rank."""

    extents: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.extents) not in _KIND_BY_RANK:
            raise ShapeError(f"unsupported tensor rank {len(self.extents)}: {self.extents}")
        if any(not isinstance(e, int) or isinstance(e, bool) or e < 1 for e in self.extents):
            raise ShapeError(f"extents must be positive integers, got {self.extents}")

    @property
    def kind(self) -> str:
        return _KIND_BY_RANK[len(self.extents)]

    @property
    def rank(self) -> int:
        return len(self.extents)

    def elements(self) -> int:
        return math.prod(self.extents)

    @classmethod
    def of(cls, *extents: int) -> "TensorShape":
        return cls(tuple(extents))

    @classmethod
    def coerce(cls, value: "TensorShape | list[int] | tuple[int, ...]") -> "TensorShape":
        if isinstance(value, TensorShape):
            return value
        return cls(tuple(value))

    def __iter__(self):
        return iter(self.extents)

    def __str__(self) -> str:
        return "[" + ", ".join(str(e) for e in self.extents) + "]"
