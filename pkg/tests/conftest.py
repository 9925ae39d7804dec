import pytest

from archex import parse_spec

_acceptance_outcomes: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" in report.nodeid and report.when == "call":
        _acceptance_outcomes[report.nodeid] = report.outcome
    elif "test_acceptance.py" in report.nodeid and report.outcome == "skipped":
        _acceptance_outcomes.setdefault(report.nodeid, "skipped")


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_outcomes:
        return
    terminalreporter.write_line("")
    terminalreporter.write_line("acceptance criteria:")
    for nodeid in sorted(_acceptance_outcomes):
        name = nodeid.split("::")[-1]
        outcome = _acceptance_outcomes[nodeid]
        label = {"passed": "PASS", "skipped": "SKIP"}.get(outcome, "FAIL")
        terminalreporter.write_line(f"  {name}: {label}")


def conv_classifier_yaml(depths="[1, 2, 3, 4, 5, 6]", widths="[32, 64, 128]") -> str:
    """The 1-D convolutional classifier space used throughout the suite."""
    return f"""\
input: [4, 1250]
output: 6
sequence:
  - block: features
    op_candidates: conv-block
    type_repeat:
      type: vary_all
      depth: {depths}
  - block: head
    op_candidates: linear
    linear:
      width: {widths}
default_op_params:
  conv1d:
    kernel_size: [3, 5]
    out_channels: [8, 16]
composites:
  conv-block:
    sequence:
      - block: conv
        op_candidates: conv1d
      - block: pool
        op_candidates: [maxpool, identity]
"""


@pytest.fixture(scope="session")
def full_space():
    return parse_spec(conv_classifier_yaml())


@pytest.fixture(scope="session")
def d3_space():
    return parse_spec(conv_classifier_yaml(depths="[1, 2, 3]"))


@pytest.fixture(scope="session")
def d1_space():
    return parse_spec(conv_classifier_yaml(depths="[1]"))
