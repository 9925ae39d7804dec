import numpy as np
import pytest

from archex import (
    ArchitectureIR,
    CriteriaSet,
    EvalContext,
    OptimizationCriteria,
    RandomTrialSource,
    ResolvedLayer,
    SyntheticPerformanceProxy,
    build_model,
    estimate_flops,
    estimate_latency,
    estimate_memory,
    estimate_params,
    evaluate_trial,
    forward_counted,
    init_params,
    sample_architecture,
    scalarize,
)
from archex.backend import DeviceModel
from archex.errors import SchemaError, WeightError


def _graph(*layers, input_shape, output_shape):
    ir = ArchitectureIR(layers=tuple(
        ResolvedLayer(path=f"b{i}", op_name=op, params=params) for i, (op, params) in enumerate(layers)
    ))
    return build_model(ir, input_shape, output_shape)


def _single(op, params, input_shape):
    from archex.builder import ModelGraph
    from archex.registry import default_registry

    config = default_registry().layer(op).build(__import__("archex").TensorShape.coerce(input_shape), params)
    return ModelGraph(input_shape=config.input_shape, layers=(config,), output_shape=config.output_shape)


def test_param_counts():
    assert estimate_params(_single("linear", {"width": 6}, [4992])).value == 29958
    assert estimate_params(_single("conv1d", {"kernel_size": 3, "out_channels": 8}, [4, 10])).value == 104
    assert estimate_params(_single("identity", {}, [10])).value == 0


def test_flops_values():
    conv = _single("conv1d", {"kernel_size": 3, "out_channels": 8}, [4, 1250])
    assert estimate_flops(conv).value == 239616
    assert estimate_flops(_single("identity", {}, [10])).value == 0


def test_flops_additivity():
    graph = _graph(
        ("conv1d", {"kernel_size": 3, "out_channels": 8}),
        ("linear", {"width": 64}),
        input_shape=[4, 1250],
        output_shape=[6],
    )
    per_layer = [estimate_flops(_single(l.op_name, dict(l.params), list(l.input_shape.extents)))
                 .value for l in graph.layers]
    assert estimate_flops(graph).value == sum(per_layer)


def test_memory_two_buffers():
    assert estimate_memory(_single("identity", {}, [10])).value == 80
    linear = _single("linear", {"width": 6}, [4992])
    assert estimate_memory(linear).value == 4 * (29958 + 4992 + 6)


def test_memory_peak_is_max_not_sum():
    graph = _graph(
        ("conv1d", {"kernel_size": 3, "out_channels": 8}),
        ("maxpool", {}),
        ("linear", {"width": 32}),
        input_shape=[4, 1250],
        output_shape=[6],
    )
    params = estimate_params(graph).value
    peaks = [l.input_shape.elements() + l.output_shape.elements() for l in graph.layers]
    assert estimate_memory(graph).value == 4 * (params + max(peaks))


def test_latency_direct_substitution():
    device = DeviceModel(throughput=1e9, per_layer_overhead=1e-5)
    conv = _single("conv1d", {"kernel_size": 3, "out_channels": 8}, [4, 1250])
    assert estimate_latency(conv, device).value == pytest.approx(2.49616e-4, rel=1e-12)

    idle = _graph(("identity", {}), ("identity", {}), input_shape=[4], output_shape=[4])
    # identity+identity+flatten+head: only the head has FLOPs; overhead counts all layers
    layers = len(idle.layers)
    expected = layers * 1e-5 + estimate_flops(idle).value / 1e9
    assert estimate_latency(idle, device).value == pytest.approx(expected, rel=1e-12)


def test_zero_flop_graph_latency_is_overhead_times_layers():
    from archex.builder import ModelGraph
    from archex.registry import default_registry

    reg = default_registry()
    shape = __import__("archex").TensorShape.of(12)
    chain = []
    cur = shape
    for _ in range(3):
        cfg = reg.layer("relu").build(cur, {})
        chain.append(cfg)
        cur = cfg.output_shape
    g = ModelGraph(input_shape=shape, layers=tuple(chain), output_shape=cur)
    device = DeviceModel(throughput=1e9, per_layer_overhead=1e-5)
    assert estimate_latency(g, device).value == pytest.approx(3e-5, rel=1e-12)


def test_estimators_match_instrumented_interpreter(full_space):
    rng = np.random.default_rng(7)
    for seed in range(50):
        ir = sample_architecture(full_space, RandomTrialSource(seed))
        graph = build_model(ir, full_space.input_shape, full_space.output_shape)
        params = init_params(graph, seed)
        x = rng.normal(size=full_space.input_shape).astype(np.float32)
        _, macs, peak = forward_counted(graph, params, x)
        assert estimate_flops(graph).value == 2 * macs
        store_scalars = sum(t.size for tensors in params.values() for t in tensors.values())
        assert estimate_params(graph).value == store_scalars
        assert estimate_memory(graph).value == 4 * store_scalars + peak


# --- scalarization -------------------------------------------------------------


def test_scalarize_weighted_sum():
    entries = [(0.9, 0.7, "maximize"), (0.5, 0.3, "minimize")]
    assert scalarize(entries) == pytest.approx(0.78, abs=1e-12)
    assert scalarize([(0.42, 1.0, "maximize")]) == pytest.approx(0.42, abs=1e-12)


def test_scalarize_injected_aggregator():
    entries = [(0.2, 1.0, "maximize"), (0.9, 1.0, "maximize")]
    assert scalarize(entries, aggregator=lambda e: max(v for v, _, _ in e)) == 0.9


def test_scalarize_requires_weights():
    with pytest.raises(WeightError):
        scalarize([(0.5, None, "maximize")])


def test_weight_rescaling_preserves_ranking():
    rng = np.random.default_rng(0)
    trials = [[(rng.uniform(), 0.7, "maximize"), (rng.uniform(), 0.3, "minimize")] for _ in range(50)]
    base = [scalarize(t) for t in trials]
    scaled = [scalarize([(v, w * 37.5, d) for v, w, d in t]) for t in trials]
    assert np.argsort(base).tolist() == np.argsort(scaled).tolist()


def test_monotone_in_each_objective():
    base = [(0.3, 0.5, "maximize"), (0.6, 0.5, "minimize")]
    s0 = scalarize(base)
    assert scalarize([(0.4, 0.5, "maximize"), base[1]]) >= s0
    assert scalarize([base[0], (0.5, 0.5, "minimize")]) >= s0


# --- staged evaluation -----------------------------------------------------------


class CountingEstimator:
    def __init__(self, fn):
        self.fn = fn
        self.count = 0

    def __call__(self, ctx):
        self.count += 1
        return self.fn(ctx)


def test_hard_constraint_short_circuits():
    graph = _graph(("linear", {"width": 6}), input_shape=[4992], output_shape=[6])
    hard = CountingEstimator(lambda ctx: estimate_params(ctx.graph))
    objective = CountingEstimator(lambda ctx: estimate_flops(ctx.graph))
    criteria = CriteriaSet(criteria=(
        OptimizationCriteria(name="params_cap", kind="hard_constraint", estimate=hard, threshold=10.0),
        OptimizationCriteria(name="flops", kind="objective", estimate=objective, weight=1.0, bounds=(0.0, 1e6)),
    ))
    outcome = evaluate_trial(EvalContext(graph=graph), criteria)
    assert outcome.status == "pruned"
    assert outcome.violated == "params_cap"
    assert hard.count == 1
    assert objective.count == 0
    assert outcome.calls == {"params_cap": 1, "flops": 0}


def test_no_constraints_single_objective():
    graph = _graph(("linear", {"width": 6}), input_shape=[8], output_shape=[6])
    criteria = CriteriaSet(criteria=(
        OptimizationCriteria(
            name="params", kind="objective",
            estimate=lambda ctx: estimate_params(ctx.graph), weight=1.0, bounds=(0.0, 100.0),
        ),
    ))
    outcome = evaluate_trial(EvalContext(graph=graph), criteria)
    assert outcome.status == "complete"
    assert outcome.metrics["params"].value == 8 * 6 + 6
    assert outcome.score == pytest.approx(1.0 - 54 / 100.0)


def test_weighted_sum_example_through_evaluate():
    graph = _graph(("identity", {}), input_shape=[4], output_shape=[4])
    criteria = CriteriaSet(criteria=(
        OptimizationCriteria(name="acc", kind="objective",
                             estimate=lambda ctx: __import__("archex").MetricValue("acc", 0.9, "maximize"),
                             weight=0.7, bounds=(0.0, 1.0)),
        OptimizationCriteria(name="lat", kind="objective",
                             estimate=lambda ctx: __import__("archex").MetricValue("lat", 0.5, "minimize"),
                             weight=0.3, bounds=(0.0, 1.0)),
    ))
    outcome = evaluate_trial(EvalContext(graph=graph), criteria)
    assert outcome.score == pytest.approx(0.78, abs=1e-12)


def test_soft_constraint_penalty():
    graph = _graph(("identity", {}), input_shape=[4], output_shape=[4])
    mk = __import__("archex").MetricValue
    criteria = CriteriaSet(criteria=(
        OptimizationCriteria(name="acc", kind="objective",
                             estimate=lambda ctx: mk("acc", 0.8, "maximize"), weight=1.0, bounds=(0, 1)),
        OptimizationCriteria(name="size", kind="soft_constraint",
                             estimate=lambda ctx: mk("size", 80.0, "minimize"),
                             weight=0.5, threshold=60.0, bounds=(0.0, 100.0)),
    ))
    outcome = evaluate_trial(EvalContext(graph=graph), criteria)
    # normalized excess = 0.8 - 0.6 = 0.2, penalty = 0.5 * 0.2
    assert outcome.score == pytest.approx(0.8 - 0.1, abs=1e-12)


def test_estimator_failure_marks_trial_failed():
    graph = _graph(("identity", {}), input_shape=[4], output_shape=[4])

    def broken(ctx):
        raise ValueError("boom")

    criteria = CriteriaSet(criteria=(
        OptimizationCriteria(name="bad", kind="objective", estimate=broken, weight=1.0, bounds=(0, 1)),
    ))
    outcome = evaluate_trial(EvalContext(graph=graph), criteria)
    assert outcome.status == "failed"
    assert "bad" in outcome.error


def test_hard_constraint_must_not_carry_weight():
    with pytest.raises(SchemaError):
        OptimizationCriteria(name="x", kind="hard_constraint",
                             estimate=lambda ctx: None, threshold=1.0, weight=0.5)
    with pytest.raises(WeightError):
        OptimizationCriteria(name="x", kind="objective", estimate=lambda ctx: None, bounds=(0, 1))
    with pytest.raises(SchemaError):
        CriteriaSet(criteria=(
            OptimizationCriteria(name="only_hard", kind="hard_constraint",
                                 estimate=lambda ctx: None, threshold=1.0),
        ))


def test_proxy_deterministic_and_bounded(d1_space):
    proxy = SyntheticPerformanceProxy(seed=3)
    irs = [sample_architecture(d1_space, RandomTrialSource(s)) for s in range(20)]
    scores = [proxy.score(ir) for ir in irs]
    assert scores == [proxy.score(ir) for ir in irs]
    assert all(0.0 <= s <= 1.0 for s in scores)
    assert len(set(scores)) > 1


def test_proxy_planted_optimum_scores_highest(d1_space):
    from archex import enumerate_space

    irs = list(enumerate_space(d1_space))
    planted = irs[7]
    proxy = SyntheticPerformanceProxy(seed=0, planted=planted, locality=0.7)
    scores = [proxy.score(ir) for ir in irs]
    best = max(range(len(irs)), key=lambda i: scores[i])
    assert irs[best] == planted
    assert scores[best] >= 0.7
