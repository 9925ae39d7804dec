"""Mapping trial randomness to fully resolved architecture candidates.

Sampling order is fixed: pre-processing stages first, then blocks in document
order; within a block the depth decision precedes the op choice, which
precedes per-layer parameters. Every decision is recorded under a stable
dotted key so a trace can be replayed or mutated.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .domains import ParamDomain, Scalar
from .errors import ResolutionError
from .preproc import ResolvedPreproc, ResolvedStage
from .space import BlockSpec, SearchSpaceSpec


@dataclass(frozen=True)
class ResolvedLayer:
    """One concrete layer of a candidate: source path, op, scalar params."""

    path: str
    op_name: str
    params: dict


@dataclass(frozen=True)
class ArchitectureIR:
    """A sampled candidate. The trace is bookkeeping and excluded from equality."""

    layers: tuple[ResolvedLayer, ...]
    preproc: ResolvedPreproc | None = None
    trace: tuple = field(default=(), compare=False)

    def signature(self) -> str:
        parts = []
        if self.preproc is not None:
            for stage in self.preproc.stages:
                items = ",".join(f"{k}={v!r}" for k, v in sorted(stage.params.items()))
                parts.append(f"pre:{stage.stage_name}|{stage.op_name}|{items}")
        for layer in self.layers:
            items = ",".join(f"{k}={v!r}" for k, v in sorted(layer.params.items()))
            parts.append(f"{layer.path}|{layer.op_name}|{items}")
        return ";".join(parts)

    def feature_set(self) -> frozenset:
        """Structural coordinates used for similarity between candidates."""
        feats = set()
        if self.preproc is not None:
            for stage in self.preproc.stages:
                feats.add(("pre-op", stage.stage_name, stage.op_name))
                for k, v in stage.params.items():
                    feats.add(("pre-param", stage.stage_name, stage.op_name, k, v))
        for layer in self.layers:
            feats.add(("op", layer.path, layer.op_name))
            for k, v in layer.params.items():
                feats.add(("param", layer.path, layer.op_name, k, v))
        return frozenset(feats)


class TrialSource:
    """Suggestion stream: same seed and key sequence imply identical values."""

    def suggest(self, key: str, domain: ParamDomain) -> Scalar:
        raise NotImplementedError


class RandomTrialSource(TrialSource):
    """Uniform independent choices from a seeded generator."""

    def __init__(self, seed: int) -> None:
        self.seed = seed
        self._rng = random.Random(seed)

    def suggest(self, key: str, domain: ParamDomain) -> Scalar:
        return self._rng.choice(domain.values)


class ReplayTrialSource(TrialSource):
    """Replays a recorded trace; any unknown key is an error."""

    def __init__(self, trace) -> None:
        self._values = dict(trace)
        self.consumed: set[str] = set()

    def suggest(self, key: str, domain: ParamDomain) -> Scalar:
        if key not in self._values:
            raise ResolutionError(f"trace has no value for key '{key}'")
        if key in self.consumed:
            raise ResolutionError(f"key '{key}' consumed twice during replay")
        self.consumed.add(key)
        return self._values[key]


class PatchedTrialSource(TrialSource):
    """Replays kept parent values and samples everything else fresh."""

    def __init__(self, kept: dict, rng: random.Random) -> None:
        self._kept = kept
        self._rng = rng

    def suggest(self, key: str, domain: ParamDomain) -> Scalar:
        if key in self._kept and self._kept[key] in domain:
            return self._kept[key]
        return self._rng.choice(domain.values)


class _Recorder:
    """Wraps a source, records the trace, and validates every suggestion."""

    def __init__(self, source: TrialSource) -> None:
        self._source = source
        self.trace: list[tuple[str, Scalar]] = []
        self._seen: set[str] = set()

    def suggest(self, key: str, domain: ParamDomain) -> Scalar:
        if key in self._seen:
            raise ResolutionError(f"decision key '{key}' sampled twice in one trial")
        value = self._source.suggest(key, domain)
        if value not in domain:
            raise ResolutionError(f"suggested value {value!r} for '{key}' is outside its domain")
        self._seen.add(key)
        self.trace.append((key, value))
        return value


def _suggest_params(spec: SearchSpaceSpec, block: BlockSpec, op: str, base: str, rec: _Recorder) -> dict:
    params = {}
    for pname, domain in spec.effective_domains(block, op).items():
        if domain.searchable:
            params[pname] = rec.suggest(f"{base}.{op}.{pname}", domain)
        else:
            params[pname] = domain.values[0]
    return params


def _instantiate(spec, block, op, base, rec, layers) -> None:
    if spec.is_composite(op):
        inner_map: dict[str, BlockSpec] = {}
        for inner in spec.composites[op]:
            _sample_block(spec, inner, f"{base}.{op}.{inner.name}", rec, inner_map, layers)
            inner_map[inner.name] = inner
    else:
        layers.append(ResolvedLayer(path=base, op_name=op, params=_suggest_params(spec, block, op, base, rec)))


def _suggest_op(block: BlockSpec, base: str, rec: _Recorder) -> str:
    if len(block.op_candidates) == 1:
        return block.op_candidates[0]
    return rec.suggest(f"{base}.op", ParamDomain.choices(block.op_candidates))


def _suggest_depth(repeat, base: str, rec: _Recorder) -> int:
    if repeat.depth.searchable:
        return rec.suggest(f"{base}.depth", repeat.depth)
    return repeat.depth.values[0]


def _relabel(layer: ResolvedLayer, old: str, new: str) -> ResolvedLayer:
    return ResolvedLayer(path=new + layer.path[len(old):], op_name=layer.op_name, params=dict(layer.params))


def _sample_block(spec, block, bp, rec, seq_map, layers) -> None:
    repeat = block.repeat
    if repeat is None:
        op = _suggest_op(block, bp, rec)
        _instantiate(spec, block, op, bp, rec, layers)
        return
    if repeat.mode == "repeat_block":
        target = seq_map.get(repeat.ref_block)
        if target is None:
            raise ResolutionError(f"block '{block.name}' references unknown block '{repeat.ref_block}'")
        _sample_block(spec, target, bp, rec, seq_map, layers)
        return
    depth = _suggest_depth(repeat, bp, rec)
    if repeat.mode == "vary_all":
        for i in range(depth):
            base = f"{bp}.rep{i}"
            op = _suggest_op(block, base, rec)
            _instantiate(spec, block, op, base, rec, layers)
    elif repeat.mode == "repeat_op":
        op = _suggest_op(block, bp, rec)
        for i in range(depth):
            _instantiate(spec, block, op, f"{bp}.rep{i}", rec, layers)
    else:  # repeat_params: sample once, replicate
        op = _suggest_op(block, bp, rec)
        unit: list[ResolvedLayer] = []
        _instantiate(spec, block, op, bp, rec, unit)
        for i in range(depth):
            layers.extend(_relabel(l, bp, f"{bp}.rep{i}") for l in unit)


def _sample_preproc(spec: SearchSpaceSpec, rec: _Recorder) -> ResolvedPreproc | None:
    if spec.preprocessing is None:
        return None
    stages = []
    for stage in spec.preprocessing.stages:
        base = f"preprocessing.{stage.name}"
        if len(stage.op_candidates) == 1:
            op = stage.op_candidates[0]
        else:
            op = rec.suggest(f"{base}.op", ParamDomain.choices(stage.op_candidates))
        params = {}
        for pname, domain in stage.params.get(op, {}).items():
            if domain.searchable:
                params[pname] = rec.suggest(f"{base}.{op}.{pname}", domain)
            else:
                params[pname] = domain.values[0]
        stages.append(ResolvedStage(stage_name=stage.name, op_name=op, params=params))
    return ResolvedPreproc(stages=tuple(stages))


def sample_architecture(spec: SearchSpaceSpec, trial: TrialSource) -> ArchitectureIR:
    """Resolve one candidate from the space using the trial's suggestions."""
    rec = _Recorder(trial)
    preproc = _sample_preproc(spec, rec)
    layers: list[ResolvedLayer] = []
    seq_map: dict[str, BlockSpec] = {}
    for block in spec.sequence:
        _sample_block(spec, block, block.name, rec, seq_map, layers)
        seq_map[block.name] = block
    return ArchitectureIR(layers=tuple(layers), preproc=preproc, trace=tuple(rec.trace))


def replay_architecture(spec: SearchSpaceSpec, trace) -> ArchitectureIR:
    """Rebuild the identical candidate from a recorded trace, bypassing randomness."""
    source = ReplayTrialSource(trace)
    ir = sample_architecture(spec, source)
    unused = {k for k, _ in trace} - source.consumed
    if unused:
        raise ResolutionError(f"trace keys never consumed during replay: {sorted(unused)}")
    return ir


# --- key listing ---------------------------------------------------------------


def _unit_keys(spec, block, base, pairs) -> None:
    if len(block.op_candidates) > 1:
        pairs.append((f"{base}.op", ParamDomain.choices(block.op_candidates)))
    for op in block.op_candidates:
        _op_keys(spec, block, op, base, pairs)


def _op_keys(spec, block, op, base, pairs) -> None:
    if spec.is_composite(op):
        inner_map: dict[str, BlockSpec] = {}
        for inner in spec.composites[op]:
            _block_keys(spec, inner, f"{base}.{op}.{inner.name}", inner_map, pairs)
            inner_map[inner.name] = inner
    else:
        for pname, domain in spec.effective_domains(block, op).items():
            if domain.searchable:
                pairs.append((f"{base}.{op}.{pname}", domain))


def _block_keys(spec, block, bp, seq_map, pairs) -> None:
    repeat = block.repeat
    if repeat is None:
        _unit_keys(spec, block, bp, pairs)
        return
    if repeat.mode == "repeat_block":
        _block_keys(spec, seq_map[repeat.ref_block], bp, seq_map, pairs)
        return
    if repeat.depth.searchable:
        pairs.append((f"{bp}.depth", repeat.depth))
    max_depth = max(repeat.depth.values)
    if repeat.mode == "vary_all":
        for i in range(max_depth):
            _unit_keys(spec, block, f"{bp}.rep{i}", pairs)
    elif repeat.mode == "repeat_op":
        if len(block.op_candidates) > 1:
            pairs.append((f"{bp}.op", ParamDomain.choices(block.op_candidates)))
        for i in range(max_depth):
            for op in block.op_candidates:
                _op_keys(spec, block, op, f"{bp}.rep{i}", pairs)
    else:  # repeat_params
        _unit_keys(spec, block, bp, pairs)


def parameter_domains(spec: SearchSpaceSpec) -> dict[str, ParamDomain]:
    """Every decision key the space can materialize with its domain, in sampling order.

    Keys under a searchable depth are conditional: a single trial only
    consumes the subset matching its sampled depth and op choices.
    """
    pairs: list[tuple[str, ParamDomain]] = []
    if spec.preprocessing is not None:
        for stage in spec.preprocessing.stages:
            base = f"preprocessing.{stage.name}"
            if len(stage.op_candidates) > 1:
                pairs.append((f"{base}.op", ParamDomain.choices(stage.op_candidates)))
            for op in stage.op_candidates:
                for pname, domain in stage.params.get(op, {}).items():
                    if domain.searchable:
                        pairs.append((f"{base}.{op}.{pname}", domain))
    seq_map: dict[str, BlockSpec] = {}
    for block in spec.sequence:
        _block_keys(spec, block, block.name, seq_map, pairs)
        seq_map[block.name] = block
    return dict(pairs)


def parameter_keys(spec: SearchSpaceSpec) -> list[str]:
    """Ordered list of decision keys; see parameter_domains for the domains."""
    return list(parameter_domains(spec))
