"""Turns a resolved candidate into a shape-checked model graph.

Shapes are inferred layer by layer; where consecutive tensor kinds differ an
adapter from the transition registry is spliced in. The graph always ends in
the declared output shape: a head-capable final op is built against it, any
other final op gets a flatten adapter plus a synthetic linear head appended.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import CapabilityError, ResolutionError, ShapeError
from .registry import LayerConfig, LayerRegistry, default_registry, flatten_config
from .sampler import ArchitectureIR
from .shapes import TensorShape


@dataclass(frozen=True)
class ModelGraph:
    """Ordered layer configs with exactly chaining shapes."""

    input_shape: TensorShape
    layers: tuple[LayerConfig, ...]
    output_shape: TensorShape

    def __post_init__(self) -> None:
        if not self.layers:
            raise ShapeError("a model graph needs at least one layer")
        if self.layers[0].input_shape != self.input_shape:
            raise ShapeError("first layer does not consume the graph input")
        for left, right in zip(self.layers, self.layers[1:]):
            if left.output_shape != right.input_shape:
                raise ShapeError(
                    f"shape break between '{left.op_name}' ({left.output_shape}) "
                    f"and '{right.op_name}' ({right.input_shape})"
                )
        if self.layers[-1].output_shape != self.output_shape:
            raise ShapeError(
                f"graph ends in {self.layers[-1].output_shape}, declared output is {self.output_shape}"
            )

    def parameter_inventory(self) -> dict:
        """Declared weight-tensor shapes per layer index (parameterized layers only)."""
        return {i: dict(l.weight_shapes) for i, l in enumerate(self.layers) if l.weight_shapes}


def _check_capability(capabilities, op_name: str, params: dict) -> None:
    if capabilities is None:
        return
    if not capabilities.supports(op_name):
        raise CapabilityError(f"op '{op_name}' is not supported by the bound backend")
    for pname, value in params.items():
        limit = capabilities.limit_for(op_name, pname)
        if limit is not None and value > limit:
            raise CapabilityError(
                f"op '{op_name}' parameter {pname}={value} exceeds backend limit {limit}"
            )


def _adapt(registry, cur: TensorShape, wanted_kinds, layers, capabilities) -> TensorShape:
    if wanted_kinds is None or cur.kind in wanted_kinds:
        return cur
    entry = registry.resolve_transition(cur.kind, wanted_kinds[0])
    config = entry.adapt(cur)
    _check_capability(capabilities, config.op_name, config.params)
    layers.append(config)
    return config.output_shape


def build_model(
    ir: ArchitectureIR,
    input_shape,
    output_shape,
    capabilities=None,
    registry: LayerRegistry | None = None,
) -> ModelGraph:
    """Instantiate a candidate into a model graph, inserting adapters as needed."""
    registry = registry or default_registry()
    in_shape = TensorShape.coerce(input_shape)
    out_shape = TensorShape.coerce(output_shape)

    layers: list[LayerConfig] = []
    cur = in_shape
    last = len(ir.layers) - 1
    for i, resolved in enumerate(ir.layers):
        if not registry.has_layer(resolved.op_name):
            raise ResolutionError(f"op '{resolved.op_name}' is not registered")
        entry = registry.layer(resolved.op_name)
        _check_capability(capabilities, resolved.op_name, resolved.params)
        cur = _adapt(registry, cur, entry.input_kinds, layers, capabilities)
        if i == last and entry.head_capable:
            config = entry.build_last(cur, resolved.params, out_shape)
        else:
            config = entry.build(cur, resolved.params)
        layers.append(config)
        cur = config.output_shape

    if not registry.layer(ir.layers[-1].op_name).head_capable:
        # Forced head: flatten (possibly a no-op) plus a linear head sized to the output.
        flat = flatten_config(cur, synthetic=True)
        _check_capability(capabilities, "flatten", {})
        layers.append(flat)
        cur = flat.output_shape
        head_entry = registry.layer("linear")
        _check_capability(capabilities, "linear", {})
        head = head_entry.build_last(cur, {}, out_shape)
        head = LayerConfig(
            op_name=head.op_name,
            params=head.params,
            weight_shapes=head.weight_shapes,
            input_shape=head.input_shape,
            output_shape=head.output_shape,
            synthetic=True,
        )
        layers.append(head)
        cur = head.output_shape

    return ModelGraph(input_shape=in_shape, layers=tuple(layers), output_shape=out_shape)


def describe(graph: ModelGraph, registry: LayerRegistry | None = None) -> dict:
    """Per-layer summary table plus totals, delegating counts to the estimators."""
    from .estimators import graph_flops, graph_params, layer_flops

    registry = registry or default_registry()
    rows = []
    for config in graph.layers:
        rows.append(
            {
                "op": config.op_name,
                "params": dict(config.params),
                "synthetic": config.synthetic,
                "input_shape": list(config.input_shape.extents),
                "output_shape": list(config.output_shape.extents),
                "parameter_count": config.parameter_count(),
                "flops": layer_flops(config, registry),
            }
        )
    return {
        "rows": rows,
        "totals": {
            "layers": len(rows),
            "parameter_count": graph_params(graph),
            "flops": graph_flops(graph, registry),
        },
    }
