"""Exact cardinality and exhaustive enumeration of a search space.

Counting is closed-form per repeat mode; enumeration walks the same structure
and yields every distinct candidate once, in canonical order: pre-processing
stages first, then blocks in document order, ascending depth, op candidates
and parameter choices as written.
"""

from __future__ import annotations

import itertools
from typing import Callable, Iterator

from .errors import LimitError
from .preproc import ResolvedPreproc, ResolvedStage
from .sampler import ArchitectureIR, ResolvedLayer, _relabel
from .space import BlockSpec, SearchSpaceSpec

LayerSeq = tuple[ResolvedLayer, ...]
_Factory = Callable[[], Iterator[LayerSeq]]


def _op_count(spec: SearchSpaceSpec, block: BlockSpec, op: str) -> int:
    if spec.is_composite(op):
        count = 1
        seq_map: dict[str, BlockSpec] = {}
        for inner in spec.composites[op]:
            count *= _block_count(spec, inner, seq_map)
            seq_map[inner.name] = inner
        return count
    count = 1
    for domain in spec.effective_domains(block, op).values():
        count *= len(domain)
    return count


def _unit_count(spec: SearchSpaceSpec, block: BlockSpec) -> int:
    return sum(_op_count(spec, block, op) for op in block.op_candidates)


def _block_count(spec: SearchSpaceSpec, block: BlockSpec, seq_map: dict) -> int:
    repeat = block.repeat
    if repeat is None:
        return _unit_count(spec, block)
    if repeat.mode == "repeat_block":
        return _block_count(spec, seq_map[repeat.ref_block], seq_map)
    depths = repeat.depth.values
    if repeat.mode == "vary_all":
        unit = _unit_count(spec, block)
        return sum(unit**d for d in depths)
    if repeat.mode == "repeat_op":
        per_op = [_op_count(spec, block, op) for op in block.op_candidates]
        return sum(sum(p**d for p in per_op) for d in depths)
    # repeat_params: one unit choice per depth value
    return len(depths) * _unit_count(spec, block)


def _preproc_count(spec: SearchSpaceSpec) -> int:
    if spec.preprocessing is None:
        return 1
    total = 1
    for stage in spec.preprocessing.stages:
        stage_total = 0
        for op in stage.op_candidates:
            combos = 1
            for domain in stage.params.get(op, {}).values():
                combos *= len(domain)
            stage_total += combos
        total *= stage_total
    return total


def count_configurations(spec: SearchSpaceSpec) -> int:
    """Exact number of distinct candidates the sampler can emit."""
    total = _preproc_count(spec)
    seq_map: dict[str, BlockSpec] = {}
    for block in spec.sequence:
        total *= _block_count(spec, block, seq_map)
        seq_map[block.name] = block
    return total


# --- enumeration ---------------------------------------------------------------


def _param_combos(spec, block, op) -> Iterator[dict]:
    domains = spec.effective_domains(block, op)
    names = list(domains)
    for values in itertools.product(*(domains[n].values for n in names)):
        yield dict(zip(names, values))


def _chain(factories: list[_Factory]) -> Iterator[LayerSeq]:
    """Cross product of per-block streams, first factory most significant."""
    if not factories:
        yield ()
        return
    head, rest = factories[0], factories[1:]
    for prefix in head():
        for suffix in _chain(rest):
            yield prefix + suffix


def _op_factory(spec, block, op, base) -> _Factory:
    if spec.is_composite(op):
        inner_factories = []
        seq_map: dict[str, BlockSpec] = {}
        for inner in spec.composites[op]:
            inner_factories.append(_block_factory(spec, inner, f"{base}.{op}.{inner.name}", dict(seq_map)))
            seq_map[inner.name] = inner
        return lambda: _chain(inner_factories)

    def gen() -> Iterator[LayerSeq]:
        for params in _param_combos(spec, block, op):
            yield (ResolvedLayer(path=base, op_name=op, params=params),)

    return gen


def _unit_factory(spec, block, base) -> _Factory:
    factories = [_op_factory(spec, block, op, base) for op in block.op_candidates]

    def gen() -> Iterator[LayerSeq]:
        for factory in factories:
            yield from factory()

    return gen


def _block_factory(spec, block, bp, seq_map) -> _Factory:
    repeat = block.repeat
    if repeat is None:
        return _unit_factory(spec, block, bp)
    if repeat.mode == "repeat_block":
        return _block_factory(spec, seq_map[repeat.ref_block], bp, seq_map)
    depths = sorted(repeat.depth.values)

    if repeat.mode == "vary_all":

        def gen() -> Iterator[LayerSeq]:
            for d in depths:
                reps = [_unit_factory(spec, block, f"{bp}.rep{i}") for i in range(d)]
                yield from _chain(reps)

        return gen

    if repeat.mode == "repeat_op":

        def gen() -> Iterator[LayerSeq]:
            for d in depths:
                for op in block.op_candidates:
                    reps = [_op_factory(spec, block, op, f"{bp}.rep{i}") for i in range(d)]
                    yield from _chain(reps)

        return gen

    def gen() -> Iterator[LayerSeq]:  # repeat_params
        for d in depths:
            for unit in _unit_factory(spec, block, bp)():
                yield tuple(
                    _relabel(layer, bp, f"{bp}.rep{i}") for i in range(d) for layer in unit
                )

    return gen


def _preproc_options(spec: SearchSpaceSpec) -> Iterator[ResolvedPreproc | None]:
    if spec.preprocessing is None:
        yield None
        return
    stage_options: list[list[ResolvedStage]] = []
    for stage in spec.preprocessing.stages:
        options = []
        for op in stage.op_candidates:
            domains = stage.params.get(op, {})
            names = list(domains)
            for values in itertools.product(*(domains[n].values for n in names)):
                options.append(
                    ResolvedStage(stage_name=stage.name, op_name=op, params=dict(zip(names, values)))
                )
        stage_options.append(options)
    for combo in itertools.product(*stage_options):
        yield ResolvedPreproc(stages=tuple(combo))


def enumerate_space(spec: SearchSpaceSpec, limit: int = 1_000_000) -> Iterator[ArchitectureIR]:
    """Yield every distinct candidate exactly once, in canonical order."""
    total = count_configurations(spec)
    if total > limit:
        raise LimitError(f"space has {total} configurations, enumeration limit is {limit}")
    factories = []
    seq_map: dict[str, BlockSpec] = {}
    for block in spec.sequence:
        factories.append(_block_factory(spec, block, block.name, dict(seq_map)))
        seq_map[block.name] = block
    for preproc in _preproc_options(spec):
        for layers in _chain(factories):
            yield ArchitectureIR(layers=layers, preproc=preproc)
