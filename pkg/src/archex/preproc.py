"""Searchable sensor-signal pre-processing stages, sampled jointly with the model.

A pre-processing space is an ordered list of stages; each stage picks one op
out of {filter, downsample, window_sequential, window_event, normalize,
identity} with its own parameter domains. Windowing may appear at most once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domains import ParamDomain
from .errors import GeometryError, ParamError, SchemaError
from .shapes import CHANNELLED_SEQUENCE, TensorShape

WINDOW_OPS = ("window_sequential", "window_event")


@dataclass(frozen=True)
class PreprocParam:
    name: str
    kinds: tuple[str, ...]
    required: bool = True
    minimum: int | float | None = None
    allowed: tuple[str, ...] | None = None


PREPROC_OPS: dict[str, tuple[PreprocParam, ...]] = {
    "filter": (
        PreprocParam("length", ("int",), minimum=1),
        PreprocParam("kind", ("str",), required=False, allowed=("moving-average",)),
    ),
    "downsample": (PreprocParam("factor", ("int",), minimum=1),),
    "window_sequential": (
        PreprocParam("size", ("int",), minimum=1),
        PreprocParam("stride", ("int",), minimum=1),
    ),
    "window_event": (
        PreprocParam("threshold", ("int", "float")),
        PreprocParam("size", ("int",), minimum=1),
    ),
    "normalize": (PreprocParam("method", ("str",), allowed=("minmax", "zscore")),),
    "identity": (),
}


@dataclass(frozen=True)
class PreprocStageSpec:
    """One stage slot: candidate ops plus per-op parameter domains."""

    name: str
    op_candidates: tuple[str, ...]
    params: dict

    def __post_init__(self) -> None:
        if not self.op_candidates:
            raise SchemaError(f"pre-processing stage '{self.name}' has no op candidates")
        for op in self.op_candidates:
            if op not in PREPROC_OPS:
                raise SchemaError(f"unknown pre-processing op '{op}' in stage '{self.name}'")
        for op, domains in self.params.items():
            if op not in self.op_candidates:
                raise SchemaError(
                    f"stage '{self.name}' declares params for '{op}' which is not a candidate"
                )
            _check_op_domains(op, domains, self.name)
        for op in self.op_candidates:
            _check_mandatory(op, self.params.get(op, {}), self.name)


def _check_op_domains(op: str, domains: dict, stage: str) -> None:
    known = {p.name: p for p in PREPROC_OPS[op]}
    for name, domain in domains.items():
        spec = known.get(name)
        if spec is None:
            raise SchemaError(f"pre-processing op '{op}' has no parameter '{name}' (stage '{stage}')")
        if not isinstance(domain, ParamDomain):
            raise SchemaError(f"parameter '{name}' of '{op}' must be a domain")
        if domain.kind not in spec.kinds:
            raise SchemaError(
                f"parameter '{name}' of '{op}' must be {' or '.join(spec.kinds)}, got {domain.kind}"
            )
        for value in domain.values:
            if spec.minimum is not None and value < spec.minimum:
                raise SchemaError(f"parameter '{name}' of '{op}' must be >= {spec.minimum}")
            if spec.allowed is not None and value not in spec.allowed:
                raise SchemaError(
                    f"parameter '{name}' of '{op}' must be one of {list(spec.allowed)}, got {value!r}"
                )


def _check_mandatory(op: str, domains: dict, stage: str) -> None:
    for spec in PREPROC_OPS[op]:
        if spec.required and spec.name not in domains:
            raise ParamError(
                f"pre-processing op '{op}' in stage '{stage}' is missing mandatory parameter '{spec.name}'"
            )


@dataclass(frozen=True)
class PreprocSpaceSpec:
    stages: tuple[PreprocStageSpec, ...]

    def __post_init__(self) -> None:
        windowed = [
            s.name for s in self.stages if any(op in WINDOW_OPS for op in s.op_candidates)
        ]
        if len(windowed) > 1:
            raise SchemaError(f"windowing may appear at most once, found stages {windowed}")
        seen = set()
        for stage in self.stages:
            if stage.name in seen:
                raise SchemaError(f"duplicate pre-processing stage name '{stage.name}'")
            seen.add(stage.name)


def parse_preproc_section(node: object) -> PreprocSpaceSpec:
    """Parse the YAML `preprocessing:` section (a list of stage blocks)."""
    if not isinstance(node, list) or not node:
        raise SchemaError("'preprocessing' must be a non-empty list of stage blocks")
    stages = []
    for raw in node:
        if not isinstance(raw, dict):
            raise SchemaError("each pre-processing stage must be a mapping")
        if "block" not in raw:
            raise SchemaError("pre-processing stage is missing the 'block' key")
        name = raw["block"]
        if not isinstance(name, str) or not name:
            raise SchemaError("pre-processing stage name must be a non-empty string")
        if "op_candidates" not in raw:
            raise SchemaError(f"pre-processing stage '{name}' is missing 'op_candidates'")
        cands = raw["op_candidates"]
        if isinstance(cands, str):
            cands = [cands]
        if not isinstance(cands, list) or not all(isinstance(c, str) for c in cands):
            raise SchemaError(f"op_candidates of stage '{name}' must be a name or list of names")
        params = {}
        for key, value in raw.items():
            if key in ("block", "op_candidates"):
                continue
            if key not in cands:
                raise SchemaError(f"unknown key '{key}' in pre-processing stage '{name}'")
            if not isinstance(value, dict):
                raise SchemaError(f"params of '{key}' in stage '{name}' must be a mapping")
            params[key] = {
                pname: ParamDomain.from_yaml(pnode, where=f"preprocessing.{name}.{key}.{pname}")
                for pname, pnode in value.items()
            }
        stages.append(PreprocStageSpec(name=name, op_candidates=tuple(cands), params=params))
    return PreprocSpaceSpec(stages=tuple(stages))


def preproc_section_to_yaml(spec: PreprocSpaceSpec) -> list:
    out = []
    for stage in spec.stages:
        node: dict = {"block": stage.name, "op_candidates": list(stage.op_candidates)}
        for op, domains in stage.params.items():
            node[op] = {name: dom.to_yaml() for name, dom in domains.items()}
        out.append(node)
    return out


@dataclass(frozen=True)
class ResolvedStage:
    stage_name: str
    op_name: str
    params: dict


@dataclass(frozen=True)
class ResolvedPreproc:
    """A sampled pipeline: ordered stages with scalar parameters."""

    stages: tuple[ResolvedStage, ...]


def _stage_shape(stage: ResolvedStage, shape: TensorShape) -> TensorShape:
    channels, length = shape.extents
    op, params = stage.op_name, stage.params
    if op in ("identity", "normalize"):
        return shape
    if op == "filter":
        if params["length"] > length:
            raise GeometryError(
                f"filter length {params['length']} exceeds signal length {length} (stage '{stage.stage_name}')"
            )
        return shape
    if op == "downsample":
        kept = length // params["factor"]
        if kept < 1:
            raise GeometryError(
                f"downsample factor {params['factor']} empties signal of length {length}"
            )
        return TensorShape.of(channels, kept)
    if op in WINDOW_OPS:
        size = params["size"]
        if size > length:
            raise GeometryError(f"window size {size} exceeds signal length {length}")
        return TensorShape.of(channels, size)
    raise SchemaError(f"unknown pre-processing op '{op}'")


def preproc_output_shape(rp: ResolvedPreproc, input_shape: TensorShape | list[int]) -> TensorShape:
    """The model input shape produced by the pipeline (per-window for windowed pipelines)."""
    shape = TensorShape.coerce(input_shape)
    if shape.kind != CHANNELLED_SEQUENCE:
        raise GeometryError(f"pre-processing expects a channels x length input, got {shape}")
    for stage in rp.stages:
        shape = _stage_shape(stage, shape)
    return shape


def _moving_average(x: np.ndarray, length: int) -> np.ndarray:
    # Shrink to the valid region, then repeat edge values back to full length.
    if length == 1:
        return x.copy()
    kernel = np.ones(length) / length
    valid = np.apply_along_axis(lambda row: np.convolve(row, kernel, mode="valid"), 1, x)
    left = (length - 1) // 2
    right = length - 1 - left
    return np.pad(valid, ((0, 0), (left, right)), mode="edge")


def _normalize(x: np.ndarray, method: str) -> np.ndarray:
    # Constant channels map to zeros under either method.
    if method == "minmax":
        lo = x.min(axis=1, keepdims=True)
        span = x.max(axis=1, keepdims=True) - lo
        return np.where(span == 0, 0.0, (x - lo) / np.where(span == 0, 1.0, span))
    mean = x.mean(axis=1, keepdims=True)
    std = x.std(axis=1, keepdims=True)
    return np.where(std == 0, 0.0, (x - mean) / np.where(std == 0, 1.0, std))


def _event_starts(x: np.ndarray, threshold: float) -> list[int]:
    loud = np.abs(x).max(axis=0) >= threshold
    starts = []
    for i, is_loud in enumerate(loud):
        if is_loud and (i == 0 or not loud[i - 1]):
            starts.append(i)
    return starts


def _apply_stage(stage: ResolvedStage, tensors: list[np.ndarray]) -> list[np.ndarray]:
    op, params = stage.op_name, stage.params
    if op == "identity":
        return tensors
    if op == "filter":
        for t in tensors:
            if params["length"] > t.shape[1]:
                raise GeometryError(f"filter length {params['length']} exceeds length {t.shape[1]}")
        return [_moving_average(t, params["length"]) for t in tensors]
    if op == "downsample":
        f = params["factor"]
        out = []
        for t in tensors:
            if t.shape[1] // f < 1:
                raise GeometryError(f"downsample factor {f} empties signal of length {t.shape[1]}")
            out.append(t[:, f - 1 :: f])
        return out
    if op == "normalize":
        return [_normalize(t, params["method"]) for t in tensors]
    if op == "window_sequential":
        size, stride = params["size"], params["stride"]
        out = []
        for t in tensors:
            length = t.shape[1]
            if size > length:
                raise GeometryError(f"window size {size} exceeds signal length {length}")
            count = (length - size) // stride + 1
            out.extend(t[:, j * stride : j * stride + size].copy() for j in range(count))
        return out
    if op == "window_event":
        threshold, size = params["threshold"], params["size"]
        out = []
        for t in tensors:
            if size > t.shape[1]:
                raise GeometryError(f"window size {size} exceeds signal length {t.shape[1]}")
            for start in _event_starts(t, threshold):
                if start + size <= t.shape[1]:
                    out.append(t[:, start : start + size].copy())
        return out
    raise SchemaError(f"unknown pre-processing op '{op}'")


def apply_preproc(rp: ResolvedPreproc, signal: np.ndarray) -> list[np.ndarray]:
    """Run the pipeline over one raw signal; returns the list of model inputs.

    Without windowing the list has exactly one tensor; an event-windowed
    pipeline may legitimately return an empty list when nothing triggers.
    """
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim != 2:
        raise GeometryError(f"expected a channels x length signal, got ndim={x.ndim}")
    tensors = [x]
    for stage in rp.stages:
        tensors = _apply_stage(stage, tensors)
    return tensors
