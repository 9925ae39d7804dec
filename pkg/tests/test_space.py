import pytest

from archex import ParamDomain, parse_spec, spec_to_yaml
from archex.errors import (
    ParamError,
    SchemaError,
    SpecReferenceError,
    SpecSyntaxError,
)

from conftest import conv_classifier_yaml


def test_example_space_parses(full_space):
    assert full_space.input_shape == (4, 1250)
    assert full_space.output_shape == (6,)
    assert [b.name for b in full_space.sequence] == ["features", "head"]
    assert list(full_space.composites) == ["conv-block"]
    assert [b.name for b in full_space.composites["conv-block"]] == ["conv", "pool"]


def test_single_op_name_normalized_to_list(full_space):
    assert full_space.sequence[1].op_candidates == ("linear",)


def test_output_scalar_becomes_shape_list():
    scalar = parse_spec(conv_classifier_yaml())
    listed = parse_spec(conv_classifier_yaml().replace("output: 6", "output: [6]"))
    assert scalar == listed


def test_malformed_yaml():
    with pytest.raises(SpecSyntaxError):
        parse_spec("input: [4, 1250\noutput: 6")


@pytest.mark.parametrize(
    "mutation",
    [
        ("input: [4, 1250]", "inputs: [4, 1250]"),  # unknown top-level key
        ("output: 6", "output: 6\nextra_key: 1"),
        ("    op_candidates: linear", "    op_candidates: linear\n    typo_key: {}"),
        ("input: [4, 1250]", "input: [4, -1]"),
        ("output: 6", "output: 0"),
    ],
)
def test_unknown_or_invalid_keys_rejected(mutation):
    old, new = mutation
    with pytest.raises(SchemaError):
        parse_spec(conv_classifier_yaml().replace(old, new))


def test_missing_required_key():
    text = conv_classifier_yaml().replace("input: [4, 1250]\n", "")
    with pytest.raises(SchemaError):
        parse_spec(text)


def test_dangling_ref_block():
    text = """\
input: [8]
output: 2
sequence:
  - block: a
    op_candidates: relu
  - block: b
    type_repeat:
      type: repeat_block
      ref_block: nonexistent
"""
    with pytest.raises(SpecReferenceError):
        parse_spec(text)


def test_ref_block_must_be_declared_earlier():
    text = """\
input: [8]
output: 2
sequence:
  - block: b
    type_repeat:
      type: repeat_block
      ref_block: a
  - block: a
    op_candidates: relu
"""
    with pytest.raises(SpecReferenceError):
        parse_spec(text)


def test_repeat_block_forbids_op_candidates_and_depth():
    base = """\
input: [8]
output: 2
sequence:
  - block: a
    op_candidates: relu
  - block: b
    {body}
"""
    with pytest.raises(SchemaError):
        parse_spec(base.format(body="op_candidates: relu\n    type_repeat: {type: repeat_block, ref_block: a}"))
    with pytest.raises(SchemaError):
        parse_spec(base.format(body="type_repeat: {type: repeat_block, ref_block: a, depth: 2}"))


def test_depth_required_for_depth_modes():
    text = """\
input: [8]
output: 2
sequence:
  - block: a
    op_candidates: relu
    type_repeat:
      type: vary_all
"""
    with pytest.raises(SchemaError):
        parse_spec(text)


def test_unresolvable_mandatory_param():
    text = conv_classifier_yaml().replace(
        "default_op_params:\n  conv1d:\n    kernel_size: [3, 5]\n    out_channels: [8, 16]\n",
        "default_op_params:\n  conv1d:\n    out_channels: [8, 16]\n",
    )
    with pytest.raises(ParamError):
        parse_spec(text)


def test_local_params_override_defaults():
    text = conv_classifier_yaml().replace(
        "      - block: conv\n        op_candidates: conv1d",
        "      - block: conv\n        op_candidates: conv1d\n        conv1d:\n          kernel_size: 3",
    )
    spec = parse_spec(text)
    conv_block = spec.composites["conv-block"][0]
    domains = spec.effective_domains(conv_block, "conv1d")
    assert domains["kernel_size"].values == (3,)
    assert not domains["kernel_size"].searchable
    assert domains["out_channels"].values == (8, 16)


def test_unknown_op_rejected():
    text = conv_classifier_yaml().replace("op_candidates: [maxpool, identity]", "op_candidates: [warp9]")
    with pytest.raises(SpecReferenceError):
        parse_spec(text)


def test_cyclic_composites_rejected():
    text = """\
input: [8]
output: 2
sequence:
  - block: a
    op_candidates: outer
composites:
  outer:
    sequence:
      - block: x
        op_candidates: inner
  inner:
    sequence:
      - block: y
        op_candidates: outer
"""
    with pytest.raises(SpecReferenceError):
        parse_spec(text)


def test_nested_acyclic_composites_allowed():
    text = """\
input: [8]
output: 2
sequence:
  - block: a
    op_candidates: outer
composites:
  outer:
    sequence:
      - block: x
        op_candidates: inner
  inner:
    sequence:
      - block: y
        op_candidates: relu
"""
    spec = parse_spec(text)
    assert set(spec.composites) == {"outer", "inner"}


def test_duplicate_block_names_rejected():
    text = conv_classifier_yaml().replace("- block: head", "- block: features", 1)
    with pytest.raises(SchemaError):
        parse_spec(text)


def test_mixed_choice_kinds_rejected():
    with pytest.raises(SchemaError):
        ParamDomain.choices([3, "five"])
    with pytest.raises(SchemaError):
        ParamDomain.choices([3, 3])
    with pytest.raises(SchemaError):
        ParamDomain.choices([])


def test_param_for_wrong_op_rejected():
    text = conv_classifier_yaml().replace(
        "    linear:\n      width: [32, 64, 128]",
        "    conv1d:\n      kernel_size: [3]",
    )
    with pytest.raises(SchemaError):
        parse_spec(text)


def test_roundtrip_canonical_yaml(full_space, d3_space):
    for spec in (full_space, d3_space):
        assert parse_spec(spec_to_yaml(spec)) == spec


def test_roundtrip_with_preprocessing():
    text = conv_classifier_yaml() + """\
preprocessing:
  - block: resample
    op_candidates: [downsample, identity]
    downsample:
      factor: [2, 5]
  - block: scale
    op_candidates: normalize
    normalize:
      method: [zscore, minmax]
"""
    spec = parse_spec(text)
    assert parse_spec(spec_to_yaml(spec)) == spec
    assert spec.preprocessing is not None
    assert [s.name for s in spec.preprocessing.stages] == ["resample", "scale"]


def test_reserved_names_rejected():
    for bad in ("preprocessing", "rep0", "a.b"):
        text = conv_classifier_yaml().replace("- block: head", f"- block: {bad}")
        with pytest.raises(SchemaError):
            parse_spec(text)


def test_ref_block_cannot_cross_sequences():
    text = """\
input: [8]
output: 2
sequence:
  - block: outer
    op_candidates: relu
  - block: user
    op_candidates: cell
composites:
  cell:
    sequence:
      - block: inner
        type_repeat:
          type: repeat_block
          ref_block: outer
"""
    with pytest.raises(SpecReferenceError):
        parse_spec(text)
