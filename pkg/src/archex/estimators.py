"""Cost and performance estimators plus the staged criteria-evaluation engine.

Hard constraints run first, in declaration order, and prune a trial before any
objective or soft-constraint estimator is invoked. Surviving values are
min-max normalized against user-declared bounds and scalarized by a weighted
sum unless a custom aggregator is injected.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Callable

from .builder import ModelGraph
from .errors import EstimatorFailure, SchemaError, WeightError
from .registry import LayerConfig, LayerRegistry, default_registry
from .sampler import ArchitectureIR

MINIMIZE = "minimize"
MAXIMIZE = "maximize"


@dataclass(frozen=True)
class MetricValue:
    name: str
    value: float
    direction: str
    units: str = ""

    def __post_init__(self) -> None:
        if self.direction not in (MINIMIZE, MAXIMIZE):
            raise SchemaError(f"direction must be minimize or maximize, got '{self.direction}'")
        if not isinstance(self.value, (int, float)) or not math.isfinite(self.value):
            raise SchemaError(f"metric '{self.name}' has non-finite value {self.value!r}")


@dataclass
class EvalContext:
    """Everything an estimator may look at for one trial."""

    graph: ModelGraph
    ir: ArchitectureIR | None = None
    device: object = None
    trial_seed: int = 0
    extra: dict = field(default_factory=dict)


# --- analytic cost estimators ----------------------------------------------


def layer_flops(config: LayerConfig, registry: LayerRegistry | None = None) -> int:
    registry = registry or default_registry()
    return 2 * registry.layer(config.op_name).macs(config)


def graph_params(graph: ModelGraph) -> int:
    return sum(layer.parameter_count() for layer in graph.layers)


def graph_flops(graph: ModelGraph, registry: LayerRegistry | None = None) -> int:
    registry = registry or default_registry()
    return sum(layer_flops(layer, registry) for layer in graph.layers)


def peak_activation_elements(graph: ModelGraph) -> int:
    return max(l.input_shape.elements() + l.output_shape.elements() for l in graph.layers)


def estimate_params(graph: ModelGraph) -> MetricValue:
    """Exact count of scalar weights and biases."""
    return MetricValue("parameter_count", float(graph_params(graph)), MINIMIZE, "params")


def estimate_flops(graph: ModelGraph, registry: LayerRegistry | None = None) -> MetricValue:
    """Two FLOPs per multiply-accumulate; pooling and adapters count zero."""
    return MetricValue("flops", float(graph_flops(graph, registry)), MINIMIZE, "flops")


def estimate_memory(graph: ModelGraph) -> MetricValue:
    """4 bytes per scalar: all parameters plus the peak in/out activation pair."""
    total = 4 * (graph_params(graph) + peak_activation_elements(graph))
    return MetricValue("memory", float(total), MINIMIZE, "bytes")


def estimate_latency(graph: ModelGraph, device, registry: LayerRegistry | None = None) -> MetricValue:
    """Analytic model: per-layer FLOPs over device throughput plus fixed overhead."""
    registry = registry or default_registry()
    seconds = sum(
        layer_flops(layer, registry) / device.throughput + device.per_layer_overhead
        for layer in graph.layers
    )
    return MetricValue("latency", seconds, MINIMIZE, "s")


def _hash01(*parts) -> float:
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "big") / 2**64


class SyntheticPerformanceProxy:
    """Deterministic stand-in for a trained-accuracy estimator.

    Scores a candidate by a seeded hash of its structure, optionally blended
    with similarity to a planted optimum so that search behavior is testable:
    the planted candidate scores highest and near misses score close.
    """

    name = "proxy_score"
    direction = MAXIMIZE

    def __init__(self, seed: int = 0, planted: ArchitectureIR | None = None, locality: float = 0.7):
        if not 0.0 <= locality <= 1.0:
            raise SchemaError(f"locality must be within [0, 1], got {locality}")
        self.seed = seed
        self.planted = planted
        self.locality = locality

    def score(self, ir: ArchitectureIR) -> float:
        noise = _hash01(self.seed, ir.signature())
        if self.planted is None:
            return noise
        mine, target = ir.feature_set(), self.planted.feature_set()
        union = len(mine | target)
        similarity = len(mine & target) / union if union else 1.0
        return self.locality * similarity + (1.0 - self.locality) * noise

    def __call__(self, ctx: EvalContext) -> MetricValue:
        if ctx.ir is None:
            raise EstimatorFailure("performance proxy needs the candidate IR in the context")
        return MetricValue(self.name, self.score(ctx.ir), MAXIMIZE)


# --- criteria and staged evaluation ------------------------------------------

OBJECTIVE = "objective"
SOFT_CONSTRAINT = "soft_constraint"
HARD_CONSTRAINT = "hard_constraint"


@dataclass(frozen=True)
class OptimizationCriteria:
    """One registered criterion: an estimator plus its role in the search."""

    name: str
    kind: str
    estimate: Callable[[EvalContext], MetricValue]
    weight: float | None = None
    threshold: float | None = None
    bounds: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        if self.kind not in (OBJECTIVE, SOFT_CONSTRAINT, HARD_CONSTRAINT):
            raise SchemaError(f"unknown criteria kind '{self.kind}'")
        if self.kind == HARD_CONSTRAINT:
            if self.threshold is None:
                raise SchemaError(f"hard constraint '{self.name}' needs a threshold")
            if self.weight is not None:
                raise SchemaError(f"hard constraint '{self.name}' must not carry a weight")
            return
        if self.weight is None:
            raise WeightError(f"criterion '{self.name}' needs a weight")
        if self.weight <= 0:
            raise SchemaError(f"criterion '{self.name}' weight must be positive")
        if self.bounds is None:
            raise SchemaError(f"criterion '{self.name}' needs normalizer bounds")
        if self.bounds[0] >= self.bounds[1]:
            raise SchemaError(f"criterion '{self.name}' bounds must be ordered")
        if self.kind == SOFT_CONSTRAINT and self.threshold is None:
            raise SchemaError(f"soft constraint '{self.name}' needs a threshold")

    def normalize(self, value: float) -> float:
        lo, hi = self.bounds
        return min(1.0, max(0.0, (value - lo) / (hi - lo)))


@dataclass(frozen=True)
class CriteriaSet:
    criteria: tuple[OptimizationCriteria, ...]
    aggregator: Callable | None = None

    def __post_init__(self) -> None:
        if not any(c.kind == OBJECTIVE for c in self.criteria):
            raise SchemaError("a criteria set needs at least one objective")
        names = [c.name for c in self.criteria]
        if len(set(names)) != len(names):
            raise SchemaError(f"duplicate criteria names: {names}")

    def hard(self):
        return tuple(c for c in self.criteria if c.kind == HARD_CONSTRAINT)

    def scored(self):
        return tuple(c for c in self.criteria if c.kind != HARD_CONSTRAINT)


def default_weighted_sum(entries) -> float:
    """Sum of weight * value with minimize-direction values reflected as 1 - v."""
    total = 0.0
    for value, weight, direction in entries:
        if weight is None:
            raise WeightError("weighted sum needs a weight for every entry")
        total += weight * (1.0 - value if direction == MINIMIZE else value)
    return total


def scalarize(entries, aggregator: Callable | None = None) -> float:
    return (aggregator or default_weighted_sum)(entries)


@dataclass(frozen=True)
class TrialOutcome:
    status: str  # complete | pruned | failed
    metrics: dict
    score: float | None = None
    violated: str | None = None
    error: str | None = None
    calls: dict = field(default_factory=dict)


def _violates(criterion: OptimizationCriteria, metric: MetricValue) -> bool:
    if metric.direction == MINIMIZE:
        return metric.value > criterion.threshold
    return metric.value < criterion.threshold


def evaluate_trial(ctx: EvalContext, criteria: CriteriaSet) -> TrialOutcome:
    """Staged evaluation: hard constraints first, then objectives and penalties."""
    calls: dict[str, int] = {c.name: 0 for c in criteria.criteria}
    cache: dict[int, MetricValue] = {}

    def measure(criterion: OptimizationCriteria) -> MetricValue:
        key = id(criterion.estimate)
        if key not in cache:
            calls[criterion.name] += 1
            try:
                cache[key] = criterion.estimate(ctx)
            except EstimatorFailure:
                raise
            except Exception as exc:
                raise EstimatorFailure(f"estimator '{criterion.name}' failed: {exc}") from exc
        return cache[key]

    metrics: dict[str, MetricValue] = {}
    try:
        for criterion in criteria.hard():
            metric = measure(criterion)
            metrics[criterion.name] = metric
            if _violates(criterion, metric):
                return TrialOutcome("pruned", metrics, violated=criterion.name, calls=calls)

        entries = []
        penalty = 0.0
        for criterion in criteria.scored():
            metric = measure(criterion)
            metrics[criterion.name] = metric
            normalized = criterion.normalize(metric.value)
            if criterion.kind == OBJECTIVE:
                entries.append((normalized, criterion.weight, metric.direction))
            else:
                t = criterion.normalize(criterion.threshold)
                if metric.direction == MINIMIZE:
                    excess = max(0.0, normalized - t)
                else:
                    excess = max(0.0, t - normalized)
                penalty += criterion.weight * excess
    except EstimatorFailure as exc:
        return TrialOutcome("failed", metrics, error=str(exc), calls=calls)

    score = scalarize(entries, criteria.aggregator) - penalty
    return TrialOutcome("complete", metrics, score=score, calls=calls)
