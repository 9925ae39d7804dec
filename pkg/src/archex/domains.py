"""Scalar values and finite choice domains used by the search-space DSL."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import SchemaError

Scalar = int | float | str | bool

_KIND_NAMES = {bool: "bool", int: "int", float: "float", str: "str"}


def scalar_kind(value: Scalar) -> str:
    """Return the kind tag of a scalar. bool is checked before int on purpose."""
    for typ, name in _KIND_NAMES.items():
        if isinstance(value, typ):
            return name
    raise SchemaError(f"not a scalar value: {value!r}")


@dataclass(frozen=True)
class ParamDomain:
    """A fixed scalar or a finite list of scalar choices.

    ``searchable`` records whether the value was written as a list; a fixed
    scalar is never a sampling decision, a one-element list still is.
    """

    values: tuple[Scalar, ...]
    searchable: bool

    def __post_init__(self) -> None:
        if not self.values:
            raise SchemaError("choice list must not be empty")
        kinds = {scalar_kind(v) for v in self.values}
        if len(kinds) > 1:
            raise SchemaError(f"mixed scalar kinds in one choice list: {sorted(kinds)}")
        if len(set(self.values)) != len(self.values):
            raise SchemaError(f"duplicate values in choice list: {list(self.values)}")

    @property
    def kind(self) -> str:
        return scalar_kind(self.values[0])

    @property
    def is_fixed(self) -> bool:
        return not self.searchable

    def __len__(self) -> int:
        return len(self.values)

    def __contains__(self, value: Scalar) -> bool:
        return value in self.values

    @classmethod
    def fixed(cls, value: Scalar) -> "ParamDomain":
        return cls((value,), searchable=False)

    @classmethod
    def choices(cls, values: list[Scalar] | tuple[Scalar, ...]) -> "ParamDomain":
        return cls(tuple(values), searchable=True)

    @classmethod
    def from_yaml(cls, node: object, where: str = "") -> "ParamDomain":
        """Build a domain from a parsed YAML node (scalar or list of scalars)."""
        ctx = f" at {where}" if where else ""
        if isinstance(node, list):
            for item in node:
                if not isinstance(item, (int, float, str, bool)):
                    raise SchemaError(f"non-scalar choice {item!r}{ctx}")
            return cls.choices(node)
        if isinstance(node, (int, float, str, bool)):
            return cls.fixed(node)
        raise SchemaError(f"expected scalar or list of scalars{ctx}, got {type(node).__name__}")

    def to_yaml(self) -> object:
        if self.searchable:
            return list(self.values)
        return self.values[0]
