import json
import random

import pytest

from archex import (
    CriteriaSet,
    OptimizationCriteria,
    RandomTrialSource,
    SyntheticPerformanceProxy,
    EvolutionParams,
    StudyConfig,
    estimate_params,
    load_history,
    mutate,
    parse_spec,
    replay_architecture,
    run_study,
    sample_architecture,
    write_history,
)
from archex.errors import NoCompleteTrialError
from archex.search import record_to_json

from conftest import conv_classifier_yaml


def _proxy_criteria(seed=0, planted=None, locality=0.7):
    proxy = SyntheticPerformanceProxy(seed=seed, planted=planted, locality=locality)
    return CriteriaSet(criteria=(
        OptimizationCriteria(name="fit", kind="objective", estimate=proxy, weight=1.0, bounds=(0.0, 1.0)),
    ))


@pytest.fixture(scope="module")
def small_space():
    return parse_spec(conv_classifier_yaml(depths="[1, 2]", widths="[32, 64]"))


def test_identical_seeds_identical_histories(small_space):
    config = StudyConfig(budget=10, criteria=_proxy_criteria(), seed=7)
    best_a, hist_a = run_study(small_space, config)
    best_b, hist_b = run_study(small_space, config)
    assert [record_to_json(r) for r in hist_a] == [record_to_json(r) for r in hist_b]
    assert best_a.trial_id == best_b.trial_id
    assert len(hist_a) == 10


def test_parallelism_does_not_change_results(small_space):
    base = StudyConfig(budget=16, criteria=_proxy_criteria(), seed=3, parallelism=1)
    par = StudyConfig(budget=16, criteria=_proxy_criteria(), seed=3, parallelism=4)
    _, hist_1 = run_study(small_space, base)
    _, hist_4 = run_study(small_space, par)
    assert [record_to_json(r) for r in hist_1] == [record_to_json(r) for r in hist_4]


def test_all_pruned_raises(small_space):
    criteria = CriteriaSet(criteria=(
        OptimizationCriteria(name="impossible", kind="hard_constraint",
                             estimate=lambda ctx: estimate_params(ctx.graph), threshold=0.0),
        OptimizationCriteria(name="fit", kind="objective",
                             estimate=SyntheticPerformanceProxy(), weight=1.0, bounds=(0, 1)),
    ))
    with pytest.raises(NoCompleteTrialError):
        run_study(small_space, StudyConfig(budget=5, criteria=criteria, seed=0))


def test_statuses_partition_and_pruned_have_violated(small_space):
    # the median parameter count of this space is ~60050, so this splits it
    criteria = CriteriaSet(criteria=(
        OptimizationCriteria(name="params_cap", kind="hard_constraint",
                             estimate=lambda ctx: estimate_params(ctx.graph), threshold=60050.0),
        OptimizationCriteria(name="fit", kind="objective",
                             estimate=SyntheticPerformanceProxy(), weight=1.0, bounds=(0, 1)),
    ))
    _, hist = run_study(small_space, StudyConfig(budget=40, criteria=criteria, seed=1))
    statuses = {r.status for r in hist}
    assert statuses <= {"complete", "pruned", "failed"}
    pruned = [r for r in hist if r.status == "pruned"]
    complete = [r for r in hist if r.status == "complete"]
    assert pruned and complete
    assert all(r.violated == "params_cap" for r in pruned)
    assert all(r.score is None for r in pruned)
    assert all(r.score is not None for r in complete)


def test_best_selection_monotone(small_space):
    _, hist = run_study(small_space, StudyConfig(budget=30, criteria=_proxy_criteria(), seed=5))
    best = float("-inf")
    bests = []
    for record in hist:
        if record.score is not None:
            best = max(best, record.score)
        bests.append(best)
    assert bests == sorted(bests)


def test_mutate_rate_zero_is_identity(small_space):
    for seed in range(20):
        parent = sample_architecture(small_space, RandomTrialSource(seed))
        child = mutate(parent.trace, small_space, 0.0, random.Random(seed))
        assert child == parent.trace


def test_mutate_rate_one_is_fresh_uniform(d1_space):
    # chi-square goodness of fit against the uniform 24-config distribution
    parent = sample_architecture(d1_space, RandomTrialSource(0))
    counts: dict[str, int] = {}
    n = 5000
    for i in range(n):
        child = mutate(parent.trace, d1_space, 1.0, random.Random(i))
        sig = replay_architecture(d1_space, child).signature()
        counts[sig] = counts.get(sig, 0) + 1
    assert len(counts) == 24
    expected = n / 24
    stat = sum((c - expected) ** 2 / expected for c in counts.values())
    assert stat < 41.638  # chi-square critical value, 23 dof, alpha = 0.01


def test_mutate_depth_shrink_drops_surplus_keys(small_space):
    parent = None
    for seed in range(100):
        candidate = sample_architecture(small_space, RandomTrialSource(seed))
        if dict(candidate.trace)["features.depth"] == 2:
            parent = candidate
            break
    assert parent is not None
    kept = {k: v for k, v in parent.trace if k != "features.depth"}

    class ForcedDepth:
        def suggest(self, key, domain):
            if key == "features.depth":
                return 1
            return kept.get(key, domain.values[0])

    from archex.sampler import sample_architecture as sample

    child = sample(small_space, ForcedDepth())
    child_keys = {k for k, _ in child.trace}
    assert not any(k.startswith("features.rep1") for k in child_keys)


def test_mutated_children_replay(small_space):
    rng = random.Random(9)
    parent = sample_architecture(small_space, RandomTrialSource(2))
    for _ in range(50):
        trace = mutate(parent.trace, small_space, 0.5, rng)
        ir = replay_architecture(small_space, trace)
        assert ir.trace == trace


def test_evolutionary_study_valid_and_deterministic(small_space):
    config = StudyConfig(
        budget=40, criteria=_proxy_criteria(seed=1), seed=11, sampler="evolutionary",
        evolution=EvolutionParams(population=8, offspring=8, mutation_rate=0.3),
    )
    best_a, hist_a = run_study(small_space, config)
    best_b, hist_b = run_study(small_space, config)
    assert [record_to_json(r) for r in hist_a] == [record_to_json(r) for r in hist_b]
    assert len(hist_a) == 40
    for record in hist_a:
        ir = replay_architecture(small_space, record.trace)
        assert ir.trace == record.trace


def test_evolutionary_beats_random_on_planted_optimum(small_space):
    from archex import enumerate_space

    irs = list(enumerate_space(small_space))
    planted = irs[37]
    criteria = _proxy_criteria(seed=5, planted=planted, locality=0.8)
    proxy = criteria.criteria[0].estimate
    exact = sorted(proxy.score(ir) for ir in irs)
    q90 = exact[int(0.9 * len(exact))]

    config = StudyConfig(
        budget=60, criteria=criteria, seed=21, sampler="evolutionary",
        evolution=EvolutionParams(population=10, offspring=10, mutation_rate=0.25),
    )
    best, _ = run_study(small_space, config)
    assert best.score >= q90


def test_history_jsonl_roundtrip(tmp_path, small_space):
    _, hist = run_study(small_space, StudyConfig(budget=12, criteria=_proxy_criteria(), seed=4))
    path = tmp_path / "history.jsonl"
    write_history(hist, str(path))
    lines = path.read_text().strip().split("\n")
    assert len(lines) == 12
    for line in lines:
        json.loads(line)
    loaded = load_history(str(path))
    assert [record_to_json(r) for r in loaded] == [record_to_json(r) for r in hist]


def test_infeasible_geometry_recorded_as_pruned():
    text = """\
input: [1, 6]
output: 2
sequence:
  - block: body
    op_candidates: conv1d
    type_repeat:
      type: repeat_params
      depth: [1, 3]
    conv1d:
      kernel_size: [3, 5]
      out_channels: 2
"""
    spec = parse_spec(text)
    # depth 3 with kernel 5 shrinks 6 -> 2 -> fails on the second layer
    _, hist = run_study(spec, StudyConfig(budget=30, criteria=_proxy_criteria(), seed=0))
    assert any(r.status == "pruned" and r.violated == "shape" for r in hist)
    assert any(r.status == "complete" for r in hist)
