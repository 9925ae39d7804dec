"""Deployment backends: capability reflection, JSON graph interchange, and a
simulated device for hardware-in-the-loop benchmarking.

A backend declares what it can generate via a capability set; the search
restricts the space to those ops before sampling, so only deployable
candidates are ever emitted. The simulated device turns the analytic latency
estimate into a "measurement" with deterministic seeded jitter.
"""

from __future__ import annotations

import base64
import json
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .builder import ModelGraph
from .codegen_c import C_TEMPLATE_OPS, generate_c
from .errors import CapabilityError, CapacityError, SchemaError, VersionError
from .estimators import _hash01, estimate_latency, estimate_memory
from .registry import LayerConfig, LayerRegistry, default_registry
from .runtime import ParamStore
from .shapes import TensorShape
from .space import BlockSpec, SearchSpaceSpec, validate_spec

FORMAT_VERSION = 1


@dataclass(frozen=True)
class CapabilitySet:
    """Ops a backend can realize, plus optional per-op parameter ceilings."""

    ops: frozenset[str]
    param_limits: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.ops:
            raise CapabilityError("a backend must support at least one op")

    def supports(self, op_name: str) -> bool:
        return op_name in self.ops

    def limit_for(self, op_name: str, param: str):
        return self.param_limits.get(op_name, {}).get(param)


@dataclass(frozen=True)
class DeviceModel:
    """Simulated target: throughput, fixed per-layer cost, memory, jitter bound."""

    throughput: float = 1e9
    per_layer_overhead: float = 1e-5
    memory_capacity: int = 4 * 1024 * 1024
    jitter: float = 0.0

    def __post_init__(self) -> None:
        if self.throughput <= 0:
            raise SchemaError("device throughput must be positive")
        if self.per_layer_overhead < 0:
            raise SchemaError("per-layer overhead must be non-negative")
        if not 0.0 <= self.jitter <= 0.1:
            raise SchemaError(f"jitter bound must be within [0, 0.1], got {self.jitter}")


@dataclass(frozen=True)
class BenchmarkResult:
    latency_s: float
    peak_memory_bytes: int


def benchmark(graph: ModelGraph, device: DeviceModel, seed: int,
              registry: LayerRegistry | None = None) -> BenchmarkResult:
    """Measure on the simulated device: analytic estimate times (1 + jitter).

    The jitter multiplier depends on the seed only, never on the graph, so
    measurements at a fixed seed stay monotone in model size.
    """
    memory = int(estimate_memory(graph).value)
    if memory > device.memory_capacity:
        raise CapacityError(
            f"model needs {memory} bytes, device has {device.memory_capacity}"
        )
    factor = 1.0 + device.jitter * _hash01("bench", seed)
    latency = estimate_latency(graph, device, registry).value * factor
    return BenchmarkResult(latency_s=latency, peak_memory_bytes=memory)


# --- JSON graph interchange ----------------------------------------------------


def export_json(graph: ModelGraph, params: ParamStore | None = None) -> dict:
    """Schema-stable document; round-trips to a structurally identical graph."""
    layers = []
    weights: dict[str, str] = {}
    for index, layer in enumerate(graph.layers):
        refs = {}
        for name, shape in layer.weight_shapes.items():
            ref = f"L{index}.{name}"
            refs[name] = ref
            if params is not None:
                tensor = np.ascontiguousarray(params[index][name], dtype="<f4")
                weights[ref] = base64.b64encode(tensor.tobytes()).decode("ascii")
        layers.append(
            {
                "op": layer.op_name,
                "params": dict(layer.params),
                "in_shape": list(layer.input_shape.extents),
                "out_shape": list(layer.output_shape.extents),
                "synthetic": layer.synthetic,
                "weight_shapes": {n: list(s) for n, s in layer.weight_shapes.items()},
                "weight_refs": refs,
            }
        )
    doc = {
        "format_version": FORMAT_VERSION,
        "input_shape": list(graph.input_shape.extents),
        "output_shape": list(graph.output_shape.extents),
        "layers": layers,
    }
    if params is not None:
        doc["weights"] = weights
    return doc


def import_json(doc: dict) -> tuple[ModelGraph, ParamStore | None]:
    """Rebuild a graph (and weights when embedded) from an exported document."""
    if doc.get("format_version") != FORMAT_VERSION:
        raise VersionError(f"unknown format_version {doc.get('format_version')!r}")
    layers = []
    params: ParamStore = {}
    blobs = doc.get("weights")
    try:
        for index, node in enumerate(doc["layers"]):
            weight_shapes = {n: tuple(s) for n, s in node["weight_shapes"].items()}
            layers.append(
                LayerConfig(
                    op_name=node["op"],
                    params=dict(node["params"]),
                    weight_shapes=weight_shapes,
                    input_shape=TensorShape(tuple(node["in_shape"])),
                    output_shape=TensorShape(tuple(node["out_shape"])),
                    synthetic=node["synthetic"],
                )
            )
            if blobs is not None and weight_shapes:
                params[index] = {
                    name: np.frombuffer(
                        base64.b64decode(blobs[node["weight_refs"][name]]), dtype="<f4"
                    ).reshape(shape).copy()
                    for name, shape in weight_shapes.items()
                }
        graph = ModelGraph(
            input_shape=TensorShape(tuple(doc["input_shape"])),
            layers=tuple(layers),
            output_shape=TensorShape(tuple(doc["output_shape"])),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed graph document: {exc}") from exc
    return graph, (params if blobs is not None else None)


def write_json(graph: ModelGraph, path: str, params: ParamStore | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(export_json(graph, params), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path: str) -> tuple[ModelGraph, ParamStore | None]:
    with open(path, "r", encoding="utf-8") as fh:
        return import_json(json.load(fh))


# --- capability-aware space restriction ----------------------------------------


def _filter_domains(domains: dict, op: str, caps: CapabilitySet) -> dict | None:
    """Drop choice values beyond the backend's limits; None if a domain empties."""
    out = {}
    for pname, domain in domains.items():
        limit = caps.limit_for(op, pname)
        if limit is None:
            out[pname] = domain
            continue
        kept = tuple(v for v in domain.values if v <= limit)
        if not kept:
            return None
        out[pname] = replace(domain, values=kept)
    return out


def _restrict_block(spec, block, caps, usable_composites) -> BlockSpec | None:
    if block.repeat is not None and block.repeat.mode == "repeat_block":
        return block
    kept_ops = []
    local = {}
    for op in block.op_candidates:
        if spec.is_composite(op):
            if op in usable_composites:
                kept_ops.append(op)
            continue
        if not caps.supports(op):
            continue
        domains = _filter_domains(spec.effective_domains(block, op), op, caps)
        if domains is None:
            continue
        kept_ops.append(op)
        if domains:
            local[op] = domains  # materialized so filtered values cannot leak back in
    if not kept_ops:
        return None
    return BlockSpec(name=block.name, op_candidates=tuple(kept_ops), repeat=block.repeat, local_params=local)


def restrict_spec(spec: SearchSpaceSpec, caps: CapabilitySet,
                  registry: LayerRegistry | None = None) -> SearchSpaceSpec:
    """Shrink a space to a backend's capabilities; errors if a block empties."""
    # Fixed point over composites: one becomes usable once every block of its
    # sequence keeps a candidate, which may in turn unlock composites using it.
    usable: dict[str, tuple[BlockSpec, ...]] = {}
    changed = True
    while changed:
        changed = False
        for cname, blocks in spec.composites.items():
            kept = [_restrict_block(spec, b, caps, usable) for b in blocks]
            if all(k is not None for k in kept) and usable.get(cname) != tuple(kept):
                usable[cname] = tuple(kept)
                changed = True

    sequence = []
    for block in spec.sequence:
        kept = _restrict_block(spec, block, caps, usable)
        if kept is None:
            raise CapabilityError(
                f"block '{block.name}' has no candidates supported by the backend"
            )
        sequence.append(kept)

    restricted = SearchSpaceSpec(
        input_shape=spec.input_shape,
        output_shape=spec.output_shape,
        sequence=tuple(sequence),
        default_op_params=spec.default_op_params,
        composites=usable,
        preprocessing=spec.preprocessing,
    )
    return validate_spec(restricted, registry or default_registry())


# --- backends and the generator pipeline ---------------------------------------


class CSourceBackend:
    """Self-contained C99 generator with overridable per-op templates."""

    name = "c"

    def __init__(self, ops=None, param_limits=None, templates=None):
        self._ops = frozenset(ops) if ops is not None else frozenset(C_TEMPLATE_OPS)
        self._param_limits = dict(param_limits or {})
        self._templates = dict(templates or {})

    def reflect(self) -> CapabilitySet:
        return CapabilitySet(ops=self._ops, param_limits=self._param_limits)

    def generate(self, graph: ModelGraph, params: ParamStore) -> dict[str, str]:
        for layer in graph.layers:
            if not self.supports_op(layer.op_name):
                raise CapabilityError(f"op '{layer.op_name}' not supported by the C backend")
        return generate_c(graph, params, overrides=self._templates)

    def supports_op(self, op_name: str) -> bool:
        return op_name in self._ops and (op_name in C_TEMPLATE_OPS or op_name in self._templates)


_BACKENDS = {"c": CSourceBackend}


def get_backend(name: str, **kwargs):
    try:
        return _BACKENDS[name](**kwargs)
    except KeyError:
        raise CapabilityError(f"unknown backend '{name}'") from None


def reflect(backend) -> CapabilitySet:
    """The backend's stable capability set, queried before sampling."""
    return backend.reflect()


@dataclass(frozen=True)
class CompiledArtifact:
    directory: str
    files: tuple[str, ...]
    compile_command: tuple[str, ...]


class SourcePackager:
    """Compiler stage of the pipeline: lays out sources, records the build line."""

    def compile(self, bundle: dict[str, str], out_dir: str) -> CompiledArtifact:
        os.makedirs(out_dir, exist_ok=True)
        for name, content in bundle.items():
            with open(os.path.join(out_dir, name), "w", encoding="utf-8") as fh:
                fh.write(content)
        sources = tuple(sorted(n for n in bundle if n.endswith(".c")))
        command = ("cc", "-std=c99", "-O2", "-o", "bench", *sources, "-lm")
        return CompiledArtifact(directory=out_dir, files=tuple(sorted(bundle)), compile_command=command)


class SimulatedHost:
    """Host interface stage: runs a candidate on the simulated device."""

    def run(self, graph: ModelGraph, device: DeviceModel, seed: int) -> BenchmarkResult:
        return benchmark(graph, device, seed)


class SimulatedDeviceManager:
    """Hardware manager stage: owns the (simulated) device handle."""

    def __init__(self, device: DeviceModel):
        self._device = device

    def acquire(self) -> DeviceModel:
        return self._device

    def release(self) -> None:
        pass


class GeneratorPipeline:
    """model builder -> compiler -> host interface -> hardware manager, in order."""

    def __init__(self, backend, device: DeviceModel, compiler=None, host=None, manager=None):
        self.backend = backend
        self.compiler = compiler or SourcePackager()
        self.host = host or SimulatedHost()
        self.manager = manager or SimulatedDeviceManager(device)

    def deploy(self, graph: ModelGraph, params: ParamStore, out_dir: str) -> CompiledArtifact:
        """Generate and stage an artifact; rejects models beyond device memory."""
        bundle = self.backend.generate(graph, params)
        device = self.manager.acquire()
        try:
            needed = int(estimate_memory(graph).value)
            if needed > device.memory_capacity:
                raise CapacityError(
                    f"model needs {needed} bytes, device has {device.memory_capacity}"
                )
            return self.compiler.compile(bundle, out_dir)
        finally:
            self.manager.release()

    def measure(self, graph: ModelGraph, seed: int) -> BenchmarkResult:
        device = self.manager.acquire()
        try:
            return self.host.run(graph, device, seed)
        finally:
            self.manager.release()
