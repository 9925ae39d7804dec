"""Parsing, validation, and canonical serialization of the YAML search-space DSL.

A space is a sequence of named blocks. Each block carries op candidates, an
optional repetition rule, and per-op parameter domains; missing parameters
fall back to the global `default_op_params` section. Composites declare
reusable sub-sequences of blocks that candidate lists may reference like ops.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import yaml

from .domains import ParamDomain
from .errors import ParamError, SchemaError, SpecReferenceError, SpecSyntaxError
from .preproc import PreprocSpaceSpec, parse_preproc_section, preproc_section_to_yaml
from .registry import LayerRegistry, default_registry
from .shapes import TensorShape

REPEAT_MODES = ("repeat_op", "repeat_params", "vary_all", "repeat_block")
_DEPTH_MODES = ("repeat_op", "repeat_params", "vary_all")
_RESERVED_NAMES = {"preprocessing"}
_REP_SEGMENT = re.compile(r"^rep\d+$")

_TOP_KEYS = {"input", "output", "sequence", "default_op_params", "composites", "preprocessing"}
_BLOCK_KEYS = {"block", "op_candidates", "type_repeat"}
_REPEAT_KEYS = {"type", "depth", "ref_block"}


@dataclass(frozen=True)
class RepeatSpec:
    """Repetition rule of a block: a mode plus a depth domain or a block reference."""

    mode: str
    depth: ParamDomain | None = None
    ref_block: str | None = None

    def __post_init__(self) -> None:
        if self.mode not in REPEAT_MODES:
            raise SchemaError(f"unknown repeat type '{self.mode}' (expected one of {list(REPEAT_MODES)})")
        if self.mode in _DEPTH_MODES:
            if self.depth is None:
                raise SchemaError(f"repeat type '{self.mode}' requires 'depth'")
            if self.ref_block is not None:
                raise SchemaError(f"repeat type '{self.mode}' does not take 'ref_block'")
        else:
            if self.ref_block is None:
                raise SchemaError("repeat type 'repeat_block' requires 'ref_block'")
            if self.depth is not None:
                raise SchemaError("repeat type 'repeat_block' does not take 'depth'")
        if self.depth is not None:
            if self.depth.kind != "int" or any(v < 1 for v in self.depth.values):
                raise SchemaError("'depth' must be a positive integer or a list of them")


@dataclass(frozen=True)
class BlockSpec:
    """One block: name, op candidates, optional repeat rule, local parameter domains."""

    name: str
    op_candidates: tuple[str, ...]
    repeat: RepeatSpec | None = None
    local_params: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        _check_name(self.name, "block")
        if self.repeat is not None and self.repeat.mode == "repeat_block":
            if self.op_candidates:
                raise SchemaError(
                    f"block '{self.name}' repeats another block and must not list op_candidates"
                )
        elif not self.op_candidates:
            raise SchemaError(f"block '{self.name}' has no op candidates")
        if len(set(self.op_candidates)) != len(self.op_candidates):
            raise SchemaError(f"block '{self.name}' lists duplicate op candidates")
        for op in self.local_params:
            if op not in self.op_candidates:
                raise SchemaError(
                    f"block '{self.name}' declares params for '{op}' which is not a candidate"
                )


def _check_name(name: object, what: str) -> None:
    if not isinstance(name, str) or not name:
        raise SchemaError(f"{what} name must be a non-empty string, got {name!r}")
    if "." in name:
        raise SchemaError(f"{what} name '{name}' must not contain '.'")
    if name in _RESERVED_NAMES or _REP_SEGMENT.match(name):
        raise SchemaError(f"{what} name '{name}' is reserved")


@dataclass(frozen=True)
class SearchSpaceSpec:
    """Validated, immutable in-memory form of a search-space document."""

    input_shape: tuple[int, ...]
    output_shape: tuple[int, ...]
    sequence: tuple[BlockSpec, ...]
    default_op_params: dict = field(default_factory=dict)
    composites: dict = field(default_factory=dict)
    preprocessing: PreprocSpaceSpec | None = None

    def __post_init__(self) -> None:
        if not self.sequence:
            raise SchemaError("'sequence' must contain at least one block")
        TensorShape(self.input_shape)  # rank/extent check
        TensorShape(self.output_shape)

    def effective_domains(self, block: BlockSpec, op_name: str) -> dict:
        """Parameter domains for one op of one block, defaults overridden by locals."""
        merged = dict(self.default_op_params.get(op_name, {}))
        merged.update(block.local_params.get(op_name, {}))
        return merged

    def is_composite(self, name: str) -> bool:
        return name in self.composites


# --- parsing -----------------------------------------------------------------


def _parse_candidates(node: object, block_name: str) -> tuple[str, ...]:
    if isinstance(node, str):
        return (node,)
    if isinstance(node, list) and node and all(isinstance(c, str) for c in node):
        return tuple(node)
    raise SchemaError(f"op_candidates of block '{block_name}' must be a name or a non-empty list of names")


def _parse_repeat(node: object, block_name: str) -> RepeatSpec:
    if not isinstance(node, dict):
        raise SchemaError(f"type_repeat of block '{block_name}' must be a mapping")
    unknown = set(node) - _REPEAT_KEYS
    if unknown:
        raise SchemaError(f"unknown type_repeat key(s) {sorted(unknown)} in block '{block_name}'")
    if "type" not in node:
        raise SchemaError(f"type_repeat of block '{block_name}' is missing 'type'")
    depth = None
    if "depth" in node:
        depth = ParamDomain.from_yaml(node["depth"], where=f"{block_name}.type_repeat.depth")
    ref = node.get("ref_block")
    if ref is not None and not isinstance(ref, str):
        raise SchemaError(f"ref_block of block '{block_name}' must be a string")
    return RepeatSpec(mode=node["type"], depth=depth, ref_block=ref)


def _parse_block(node: object) -> BlockSpec:
    if not isinstance(node, dict):
        raise SchemaError("each sequence entry must be a mapping")
    if "block" not in node:
        raise SchemaError("sequence entry is missing the 'block' key")
    name = node["block"]
    _check_name(name, "block")
    repeat = _parse_repeat(node["type_repeat"], name) if "type_repeat" in node else None
    if repeat is not None and repeat.mode == "repeat_block":
        candidates: tuple[str, ...] = ()
        if "op_candidates" in node:
            raise SchemaError(f"block '{name}' repeats another block and must not list op_candidates")
    else:
        if "op_candidates" not in node:
            raise SchemaError(f"block '{name}' is missing 'op_candidates'")
        candidates = _parse_candidates(node["op_candidates"], name)
    local_params = {}
    for key, value in node.items():
        if key in _BLOCK_KEYS:
            continue
        if key not in candidates:
            raise SchemaError(f"unknown key '{key}' in block '{name}'")
        if not isinstance(value, dict):
            raise SchemaError(f"params of op '{key}' in block '{name}' must be a mapping")
        local_params[key] = {
            pname: ParamDomain.from_yaml(pnode, where=f"{name}.{key}.{pname}")
            for pname, pnode in value.items()
        }
    return BlockSpec(name=name, op_candidates=candidates, repeat=repeat, local_params=local_params)


def _parse_shape(node: object, key: str) -> tuple[int, ...]:
    if isinstance(node, int) and not isinstance(node, bool):
        node = [node]
    if not isinstance(node, list) or not node:
        raise SchemaError(f"'{key}' must be a positive integer or a list of them")
    for e in node:
        if not isinstance(e, int) or isinstance(e, bool) or e < 1:
            raise SchemaError(f"'{key}' extents must be positive integers, got {node}")
    return tuple(node)


def _parse_param_section(node: object, section: str) -> dict:
    if not isinstance(node, dict):
        raise SchemaError(f"'{section}' must be a mapping of op names to parameter maps")
    out = {}
    for op, params in node.items():
        if not isinstance(params, dict):
            raise SchemaError(f"params of op '{op}' in '{section}' must be a mapping")
        out[op] = {
            pname: ParamDomain.from_yaml(pnode, where=f"{section}.{op}.{pname}")
            for pname, pnode in params.items()
        }
    return out


def parse_spec(yaml_text: str, registry: LayerRegistry | None = None) -> SearchSpaceSpec:
    """Parse and validate a search-space document; raises on the first defect."""
    try:
        root = yaml.safe_load(yaml_text)
    except yaml.YAMLError as exc:
        raise SpecSyntaxError(f"malformed YAML: {exc}") from exc
    if not isinstance(root, dict):
        raise SchemaError("top level of a search space must be a mapping")
    unknown = set(root) - _TOP_KEYS
    if unknown:
        raise SchemaError(f"unknown top-level key(s): {sorted(unknown)}")
    for key in ("input", "output", "sequence"):
        if key not in root:
            raise SchemaError(f"missing top-level key '{key}'")

    if not isinstance(root["sequence"], list):
        raise SchemaError("'sequence' must be a list of blocks")
    sequence = tuple(_parse_block(b) for b in root["sequence"])

    composites = {}
    if "composites" in root:
        if not isinstance(root["composites"], dict):
            raise SchemaError("'composites' must be a mapping of composite names to sequences")
        for cname, cnode in root["composites"].items():
            _check_name(cname, "composite")
            if not isinstance(cnode, dict) or set(cnode) != {"sequence"}:
                raise SchemaError(f"composite '{cname}' must contain exactly a 'sequence' key")
            if not isinstance(cnode["sequence"], list) or not cnode["sequence"]:
                raise SchemaError(f"composite '{cname}' must have a non-empty sequence")
            composites[cname] = tuple(_parse_block(b) for b in cnode["sequence"])

    preprocessing = None
    if "preprocessing" in root:
        preprocessing = parse_preproc_section(root["preprocessing"])

    spec = SearchSpaceSpec(
        input_shape=_parse_shape(root["input"], "input"),
        output_shape=_parse_shape(root["output"], "output"),
        sequence=sequence,
        default_op_params=_parse_param_section(root.get("default_op_params", {}), "default_op_params"),
        composites=composites,
        preprocessing=preprocessing,
    )
    validate_spec(spec, registry or default_registry())
    return spec


def load_spec(path: str, registry: LayerRegistry | None = None) -> SearchSpaceSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_spec(fh.read(), registry)


# --- validation --------------------------------------------------------------


def _all_sequences(spec: SearchSpaceSpec):
    yield "sequence", spec.sequence
    for cname, blocks in spec.composites.items():
        yield f"composite '{cname}'", blocks


def _check_composite_cycles(spec: SearchSpaceSpec) -> None:
    state: dict[str, int] = {}  # 1 = visiting, 2 = done

    def visit(name: str, chain: tuple[str, ...]) -> None:
        if state.get(name) == 2:
            return
        if state.get(name) == 1:
            raise SpecReferenceError(f"cyclic composite reference: {' -> '.join(chain + (name,))}")
        state[name] = 1
        for block in spec.composites[name]:
            for op in block.op_candidates:
                if spec.is_composite(op):
                    visit(op, chain + (name,))
        state[name] = 2

    for cname in spec.composites:
        visit(cname, ())


def _check_block(spec: SearchSpaceSpec, block: BlockSpec, earlier: dict, registry: LayerRegistry) -> None:
    if block.repeat is not None and block.repeat.mode == "repeat_block":
        target = block.repeat.ref_block
        if target not in earlier:
            raise SpecReferenceError(
                f"block '{block.name}' repeats unknown or later block '{target}'"
            )
        return
    for op in block.op_candidates:
        if spec.is_composite(op):
            if op in block.local_params:
                raise SchemaError(
                    f"block '{block.name}' declares params for composite '{op}'; "
                    "composites take no parameters"
                )
            continue
        if not registry.has_layer(op):
            raise SpecReferenceError(f"unknown op or composite '{op}' in block '{block.name}'")
        _check_op_params(spec, block, op, registry)


def _check_op_params(spec: SearchSpaceSpec, block: BlockSpec, op: str, registry: LayerRegistry) -> None:
    entry = registry.layer(op)
    known = {p.name: p for p in entry.mandatory_params + entry.optional_params}
    domains = spec.effective_domains(block, op)
    for pname, domain in domains.items():
        pspec = known.get(pname)
        if pspec is None:
            raise SchemaError(f"op '{op}' has no parameter '{pname}' (block '{block.name}')")
        if domain.kind != pspec.kind:
            raise SchemaError(
                f"parameter '{pname}' of op '{op}' must be {pspec.kind}, got {domain.kind}"
            )
        if pspec.minimum is not None and any(v < pspec.minimum for v in domain.values):
            raise SchemaError(f"parameter '{pname}' of op '{op}' must be >= {pspec.minimum}")
    for pspec in entry.mandatory_params:
        if pspec.name not in domains:
            raise ParamError(
                f"mandatory parameter '{pspec.name}' of op '{op}' in block '{block.name}' "
                "is neither declared locally nor in default_op_params"
            )


def validate_spec(spec: SearchSpaceSpec, registry: LayerRegistry | None = None) -> SearchSpaceSpec:
    """Cross-cutting checks: names, references, cycles, parameter resolvability."""
    registry = registry or default_registry()

    names: set[str] = set()
    for where, blocks in _all_sequences(spec):
        for block in blocks:
            if block.name in names:
                raise SchemaError(f"duplicate block name '{block.name}' (in {where})")
            names.add(block.name)
    for cname in spec.composites:
        if cname in names:
            raise SchemaError(f"composite name '{cname}' collides with a block name")
        if registry.has_layer(cname):
            raise SchemaError(f"composite name '{cname}' collides with a registered op")

    for op, params in spec.default_op_params.items():
        if spec.is_composite(op):
            raise SchemaError(f"default_op_params declares params for composite '{op}'")
        if not registry.has_layer(op):
            raise SpecReferenceError(f"default_op_params references unknown op '{op}'")
        entry = registry.layer(op)
        known = {p.name: p for p in entry.mandatory_params + entry.optional_params}
        for pname, domain in params.items():
            pspec = known.get(pname)
            if pspec is None:
                raise SchemaError(f"op '{op}' has no parameter '{pname}' (default_op_params)")
            if domain.kind != pspec.kind:
                raise SchemaError(
                    f"parameter '{pname}' of op '{op}' must be {pspec.kind}, got {domain.kind}"
                )

    _check_composite_cycles(spec)

    for _, blocks in _all_sequences(spec):
        earlier: dict[str, BlockSpec] = {}
        for block in blocks:
            _check_block(spec, block, earlier, registry)
            earlier[block.name] = block
    return spec


# --- canonical serialization --------------------------------------------------


def _block_to_dict(block: BlockSpec) -> dict:
    node: dict = {"block": block.name}
    if block.op_candidates:
        node["op_candidates"] = list(block.op_candidates)
    if block.repeat is not None:
        rep: dict = {"type": block.repeat.mode}
        if block.repeat.depth is not None:
            rep["depth"] = block.repeat.depth.to_yaml()
        if block.repeat.ref_block is not None:
            rep["ref_block"] = block.repeat.ref_block
        node["type_repeat"] = rep
    for op, params in block.local_params.items():
        node[op] = {name: dom.to_yaml() for name, dom in params.items()}
    return node


def spec_to_dict(spec: SearchSpaceSpec) -> dict:
    doc: dict = {
        "input": list(spec.input_shape),
        "output": list(spec.output_shape),
        "sequence": [_block_to_dict(b) for b in spec.sequence],
    }
    if spec.default_op_params:
        doc["default_op_params"] = {
            op: {name: dom.to_yaml() for name, dom in params.items()}
            for op, params in spec.default_op_params.items()
        }
    if spec.composites:
        doc["composites"] = {
            cname: {"sequence": [_block_to_dict(b) for b in blocks]}
            for cname, blocks in spec.composites.items()
        }
    if spec.preprocessing is not None:
        doc["preprocessing"] = preproc_section_to_yaml(spec.preprocessing)
    return doc


def spec_to_yaml(spec: SearchSpaceSpec) -> str:
    """Canonical YAML form; parsing it back yields an identical spec."""
    return yaml.safe_dump(spec_to_dict(spec), sort_keys=False)
