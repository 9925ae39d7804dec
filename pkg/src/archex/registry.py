"""Plugin registries for layer builders and tensor-kind transition adapters.

New operations are added by subclassing :class:`LayerBuilder` and registering
the class with the :func:`register_layer` decorator; the op then becomes usable
in search-space YAML under the registered name. Adapters between incompatible
tensor kinds live in a transition registry keyed by ``(from_kind, to_kind)``.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable

from .errors import DuplicateError, NoTransitionError, ParamError, SchemaError, ShapeError
from .shapes import CHANNELLED_SEQUENCE, FLAT_VECTOR, TensorShape


@dataclass(frozen=True)
class ParamSpec:
    """Declared parameter of an operation: kind plus an optional lower bound."""

    name: str
    kind: str = "int"
    required: bool = True
    default: object = None
    minimum: int | float | None = None


@dataclass(frozen=True)
class LayerConfig:
    """One fully resolved layer: scalar params, weight shapes, in/out shapes."""

    op_name: str
    params: dict
    weight_shapes: dict
    input_shape: TensorShape
    output_shape: TensorShape
    synthetic: bool = False

    def parameter_count(self) -> int:
        return sum(math.prod(shape) for shape in self.weight_shapes.values())


class LayerBuilder(ABC):
    """Interface every registered operation implements.

    Subclasses declare their parameters and provide `shape_fn`; `build` and
    `build_last` have generic implementations on top of `shape_fn` and
    `weight_shapes`. `build_last` is only meaningful for head-capable ops,
    which must override it so the declared output shape is always met.
    """

    op_name: str = ""
    mandatory_params: tuple[ParamSpec, ...] = ()
    optional_params: tuple[ParamSpec, ...] = ()
    # Accepted input kinds in preference order; None means any kind.
    input_kinds: tuple[str, ...] | None = None
    head_capable: bool = False

    @abstractmethod
    def shape_fn(self, input_shape: TensorShape, params: dict) -> TensorShape:
        """Output shape for the given input; raises ShapeError when infeasible."""

    def weight_shapes(self, input_shape: TensorShape, params: dict) -> dict:
        return {}

    def macs(self, config: LayerConfig) -> int:
        """Multiply-accumulate count of one forward pass; 0 for unparameterized ops."""
        return 0

    def resolve_params(self, params: dict) -> dict:
        """Check declared params against this op's signature and fill defaults."""
        known = {p.name: p for p in self.mandatory_params + self.optional_params}
        for name in params:
            if name not in known:
                raise SchemaError(f"op '{self.op_name}' has no parameter '{name}'")
        resolved = {}
        for spec in self.mandatory_params + self.optional_params:
            if spec.name in params:
                value = params[spec.name]
            elif spec.required:
                raise ParamError(f"op '{self.op_name}' is missing mandatory parameter '{spec.name}'")
            elif spec.default is None:
                continue
            else:
                value = spec.default
            if spec.minimum is not None and value < spec.minimum:
                raise ShapeError(
                    f"op '{self.op_name}' parameter '{spec.name}'={value} below minimum {spec.minimum}"
                )
            resolved[spec.name] = value
        return resolved

    def build(self, input_shape: TensorShape, params: dict) -> LayerConfig:
        resolved = self.resolve_params(params)
        out = self.shape_fn(input_shape, resolved)
        return LayerConfig(
            op_name=self.op_name,
            params=resolved,
            weight_shapes=self.weight_shapes(input_shape, resolved),
            input_shape=input_shape,
            output_shape=out,
        )

    def build_last(self, input_shape: TensorShape, params: dict, output_shape: TensorShape) -> LayerConfig:
        raise ShapeError(f"op '{self.op_name}' cannot terminate a network")


@dataclass(frozen=True)
class TransitionEntry:
    """Adapter factory for one ordered pair of tensor kinds."""

    from_kind: str
    to_kind: str
    adapt: Callable[[TensorShape], LayerConfig]


class LayerRegistry:
    """Mutable at startup, then shared read-only by trial evaluators."""

    def __init__(self) -> None:
        self._layers: dict[str, LayerBuilder] = {}
        self._transitions: dict[tuple[str, str], TransitionEntry] = {}

    def register(self, builder: LayerBuilder) -> LayerBuilder:
        name = builder.op_name
        if not name:
            raise SchemaError("layer builder must set op_name")
        if name in self._layers:
            raise DuplicateError(f"op '{name}' is already registered")
        self._layers[name] = builder
        return builder

    def register_transition(self, entry: TransitionEntry) -> TransitionEntry:
        key = (entry.from_kind, entry.to_kind)
        if key in self._transitions:
            raise DuplicateError(f"transition {key} is already registered")
        self._transitions[key] = entry
        return entry

    def has_layer(self, op_name: str) -> bool:
        return op_name in self._layers

    def layer(self, op_name: str) -> LayerBuilder:
        try:
            return self._layers[op_name]
        except KeyError:
            raise SchemaError(f"unknown op '{op_name}'") from None

    def op_names(self) -> tuple[str, ...]:
        return tuple(self._layers)

    def resolve_transition(self, from_kind: str, to_kind: str) -> TransitionEntry | None:
        """Adapter for the kind pair; None means the kinds already match."""
        if from_kind == to_kind:
            return None
        try:
            return self._transitions[(from_kind, to_kind)]
        except KeyError:
            raise NoTransitionError(f"no adapter registered for {from_kind} -> {to_kind}") from None


_default_registry = LayerRegistry()
_builtin_classes: list[type] = []


def default_registry() -> LayerRegistry:
    """The process-wide registry holding the built-in operation set."""
    return _default_registry


def builtin_registry() -> LayerRegistry:
    """A fresh registry pre-populated with the built-in ops and adapters."""
    registry = LayerRegistry()
    for cls in _builtin_classes:
        registry.register(cls())
    registry.register_transition(
        TransitionEntry(
            from_kind=CHANNELLED_SEQUENCE,
            to_kind=FLAT_VECTOR,
            adapt=lambda input_shape: flatten_config(input_shape, synthetic=True),
        )
    )
    return registry


def _builtin(cls):
    _builtin_classes.append(cls)
    return cls


def register_layer(op_name: str, registry: LayerRegistry | None = None):
    """Class decorator: instantiate the builder and register it under ``op_name``."""

    def wrap(cls):
        cls.op_name = op_name
        (registry or _default_registry).register(cls())
        return cls

    return wrap


def flatten_config(input_shape: TensorShape, synthetic: bool = False) -> LayerConfig:
    out = TensorShape.of(input_shape.elements())
    return LayerConfig(
        op_name="flatten",
        params={},
        weight_shapes={},
        input_shape=input_shape,
        output_shape=out,
        synthetic=synthetic,
    )


# --- built-in operation set ------------------------------------------------


@_builtin
@register_layer("linear")
class LinearLayer(LayerBuilder):
    """Dense layer y = Wx + b over a flat vector, `width` output features."""

    mandatory_params = (ParamSpec("width", "int", minimum=1),)
    input_kinds = (FLAT_VECTOR,)
    head_capable = True

    def shape_fn(self, input_shape, params):
        return TensorShape.of(params["width"])

    def weight_shapes(self, input_shape, params):
        return {"weight": (params["width"], input_shape.extents[0]), "bias": (params["width"],)}

    def macs(self, config):
        return config.input_shape.extents[0] * config.output_shape.extents[0]

    def build_last(self, input_shape, params, output_shape):
        # The sampled width is ignored; the head must realize the declared output.
        if output_shape.rank != 1:
            raise ShapeError(f"linear head cannot produce output shape {output_shape}")
        return self.build(input_shape, {"width": output_shape.extents[0]})


@_builtin
@register_layer("conv1d")
class Conv1dLayer(LayerBuilder):
    """1-D cross-correlation over a channels x length input, no implicit padding."""

    mandatory_params = (
        ParamSpec("kernel_size", "int", minimum=1),
        ParamSpec("out_channels", "int", minimum=1),
    )
    optional_params = (
        ParamSpec("stride", "int", required=False, default=1, minimum=1),
        ParamSpec("padding", "int", required=False, default=0, minimum=0),
    )
    input_kinds = (CHANNELLED_SEQUENCE,)

    def shape_fn(self, input_shape, params):
        _, length = input_shape.extents
        k, s, p = params["kernel_size"], params["stride"], params["padding"]
        if length + 2 * p < k:
            raise ShapeError(f"kernel {k} larger than padded length {length + 2 * p}")
        return TensorShape.of(params["out_channels"], (length + 2 * p - k) // s + 1)

    def weight_shapes(self, input_shape, params):
        in_ch = input_shape.extents[0]
        return {
            "weight": (params["out_channels"], in_ch, params["kernel_size"]),
            "bias": (params["out_channels"],),
        }

    def macs(self, config):
        in_ch = config.input_shape.extents[0]
        out_ch, out_len = config.output_shape.extents
        return out_ch * out_len * in_ch * config.params["kernel_size"]


@_builtin
@register_layer("maxpool")
class MaxPoolLayer(LayerBuilder):
    """Windowed maximum; stride defaults to the window size."""

    optional_params = (
        ParamSpec("kernel_size", "int", required=False, default=2, minimum=1),
        ParamSpec("stride", "int", required=False, minimum=1),
    )
    input_kinds = (CHANNELLED_SEQUENCE,)

    def resolve_params(self, params):
        resolved = super().resolve_params(params)
        resolved.setdefault("stride", resolved["kernel_size"])
        return resolved

    def shape_fn(self, input_shape, params):
        channels, length = input_shape.extents
        k, s = params["kernel_size"], params["stride"]
        if length < k:
            raise ShapeError(f"pool window {k} larger than length {length}")
        return TensorShape.of(channels, (length - k) // s + 1)


@_builtin
@register_layer("identity")
class IdentityLayer(LayerBuilder):
    def shape_fn(self, input_shape, params):
        return input_shape


@_builtin
@register_layer("relu")
class ReluLayer(LayerBuilder):
    def shape_fn(self, input_shape, params):
        return input_shape


@_builtin
@register_layer("flatten")
class FlattenLayer(LayerBuilder):
    """Row-major reshape to a flat vector; a no-op on rank-1 input."""

    def shape_fn(self, input_shape, params):
        return TensorShape.of(input_shape.elements())


_default_registry.register_transition(
    TransitionEntry(
        from_kind=CHANNELLED_SEQUENCE,
        to_kind=FLAT_VECTOR,
        adapt=lambda input_shape: flatten_config(input_shape, synthetic=True),
    )
)
