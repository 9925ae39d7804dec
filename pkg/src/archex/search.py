"""The optimization loop: trial scheduling, evaluation, history, best selection.

Per-trial seeds derive from (study seed, trial id), so results are a function
of the configuration alone: re-runs and different parallelism degrees produce
identical histories. Infeasible candidates (geometry, shapes) are recorded as
pruned, never crash the study.
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .backend import CapabilitySet, DeviceModel, restrict_spec
from .builder import build_model
from .enumeration import count_configurations
from .errors import (
    CapabilityError,
    GeometryError,
    NoCompleteTrialError,
    NoTransitionError,
    ResolutionError,
    SchemaError,
    ShapeError,
)
from .estimators import CriteriaSet, EvalContext, evaluate_trial
from .preproc import preproc_output_shape
from .registry import LayerRegistry, default_registry
from .sampler import ArchitectureIR, PatchedTrialSource, RandomTrialSource, sample_architecture
from .space import SearchSpaceSpec

logger = logging.getLogger(__name__)

SAMPLERS = ("random", "evolutionary")


@dataclass(frozen=True)
class EvolutionParams:
    """(mu + lambda) selection over decision traces with per-key mutation."""

    population: int = 16
    offspring: int = 16
    mutation_rate: float = 0.2
    elite_fraction: float = 0.25

    def __post_init__(self) -> None:
        if self.population < 1 or self.offspring < 1:
            raise SchemaError("population and offspring must be >= 1")
        if not 0.0 < self.mutation_rate <= 1.0:
            raise SchemaError("mutation rate must be in (0, 1]")
        if not 0.0 < self.elite_fraction <= 1.0:
            raise SchemaError("elite fraction must be in (0, 1]")


@dataclass(frozen=True)
class StudyConfig:
    budget: int
    criteria: CriteriaSet
    seed: int = 0
    sampler: str = "random"
    parallelism: int = 1
    device: DeviceModel | None = None
    capabilities: CapabilitySet | None = None
    evolution: EvolutionParams = field(default_factory=EvolutionParams)

    def __post_init__(self) -> None:
        if self.budget < 1:
            raise SchemaError("budget must be >= 1")
        if self.sampler not in SAMPLERS:
            raise SchemaError(f"unknown sampler '{self.sampler}' (expected one of {list(SAMPLERS)})")
        if self.parallelism < 1:
            raise SchemaError("parallelism must be >= 1")


@dataclass
class TrialRecord:
    trial_id: int
    seed: int
    trace: tuple
    status: str  # complete | pruned | failed
    metrics: dict = field(default_factory=dict)
    score: float | None = None
    violated: str | None = None
    error: str | None = None
    calls: dict = field(default_factory=dict)
    wall_time: float = 0.0  # in-memory only, not serialized

    def sort_score(self) -> float:
        return self.score if self.score is not None else float("-inf")


def trial_seed(study_seed: int, trial_id: int) -> int:
    digest = hashlib.sha256(f"{study_seed}:{trial_id}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def _mutate_ir(parent_trace, spec: SearchSpaceSpec, rate: float, rng: random.Random) -> ArchitectureIR:
    kept = {key: value for key, value in parent_trace if rng.random() >= rate}
    return sample_architecture(spec, PatchedTrialSource(kept, rng))


def mutate(parent_trace, spec: SearchSpaceSpec, rate: float, rng: random.Random) -> tuple:
    """Re-sample each decision key with probability `rate`; returns the child trace.

    Structural mutations cascade naturally: a depth change makes surplus layer
    keys disappear and missing ones get sampled fresh, so the child always
    replays to a valid candidate.
    """
    return _mutate_ir(parent_trace, spec, rate, rng).trace


def _evaluate_ir(ir, spec, config, registry, trial_id, seed) -> TrialRecord:
    start = time.perf_counter()
    record = TrialRecord(trial_id=trial_id, seed=seed, trace=ir.trace, status="failed")
    try:
        in_shape = spec.input_shape
        if ir.preproc is not None:
            in_shape = preproc_output_shape(ir.preproc, spec.input_shape)
        graph = build_model(ir, in_shape, spec.output_shape, config.capabilities, registry)
    except GeometryError:
        record.status, record.violated = "pruned", "preproc_geometry"
        record.wall_time = time.perf_counter() - start
        return record
    except ShapeError:
        record.status, record.violated = "pruned", "shape"
        record.wall_time = time.perf_counter() - start
        return record
    except NoTransitionError:
        record.status, record.violated = "pruned", "transition"
        record.wall_time = time.perf_counter() - start
        return record
    except CapabilityError as exc:
        record.error = str(exc)
        record.wall_time = time.perf_counter() - start
        return record

    ctx = EvalContext(graph=graph, ir=ir, device=config.device, trial_seed=seed)
    outcome = evaluate_trial(ctx, config.criteria)
    record.status = outcome.status
    record.metrics = {name: metric.value for name, metric in outcome.metrics.items()}
    record.score = outcome.score
    record.violated = outcome.violated
    record.error = outcome.error
    record.calls = outcome.calls
    record.wall_time = time.perf_counter() - start
    return record


def _run_batch(jobs, parallelism: int) -> list[TrialRecord]:
    if parallelism == 1 or len(jobs) == 1:
        records = [job() for job in jobs]
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            records = list(pool.map(lambda job: job(), jobs))
    return sorted(records, key=lambda r: r.trial_id)


def _random_jobs(spec, config, registry, ids):
    def job_for(tid: int):
        seed = trial_seed(config.seed, tid)

        def job() -> TrialRecord:
            try:
                ir = sample_architecture(spec, RandomTrialSource(seed))
            except ResolutionError as exc:
                return TrialRecord(trial_id=tid, seed=seed, trace=(), status="failed", error=str(exc))
            return _evaluate_ir(ir, spec, config, registry, tid, seed)

        return job

    return [job_for(tid) for tid in ids]


def _evolution_jobs(spec, config, registry, ids, parents):
    rate = config.evolution.mutation_rate

    def job_for(tid: int):
        seed = trial_seed(config.seed, tid)
        rng = random.Random(seed)
        parent = rng.choice(parents) if parents else None

        def job() -> TrialRecord:
            if parent is None:
                ir = sample_architecture(spec, RandomTrialSource(seed))
            else:
                ir = _mutate_ir(parent, spec, rate, rng)
            return _evaluate_ir(ir, spec, config, registry, tid, seed)

        return job

    return [job_for(tid) for tid in ids]


def run_study(
    spec: SearchSpaceSpec,
    config: StudyConfig,
    registry: LayerRegistry | None = None,
) -> tuple[TrialRecord, list[TrialRecord]]:
    """Run exactly `budget` trials; returns (best complete trial, full history)."""
    registry = registry or default_registry()
    if config.capabilities is not None:
        spec = restrict_spec(spec, config.capabilities, registry)
        logger.info("space restricted to backend capabilities: %d configurations",
                    count_configurations(spec))

    history: list[TrialRecord] = []
    if config.sampler == "random":
        jobs = _random_jobs(spec, config, registry, range(config.budget))
        history.extend(_run_batch(jobs, config.parallelism))
    else:
        evo = config.evolution
        population: list[TrialRecord] = []
        next_id = 0
        while next_id < config.budget:
            if next_id == 0:
                ids = range(min(evo.population, config.budget))
                jobs = _random_jobs(spec, config, registry, ids)
            else:
                ids = range(next_id, min(next_id + evo.offspring, config.budget))
                ranked = sorted(population, key=lambda r: (-r.sort_score(), r.trial_id))
                elite_count = max(1, round(evo.elite_fraction * evo.population))
                parents = [r.trace for r in ranked[:elite_count] if r.score is not None]
                jobs = _evolution_jobs(spec, config, registry, ids, parents)
            batch = _run_batch(jobs, config.parallelism)
            history.extend(batch)
            next_id = len(history)
            population = sorted(population + batch, key=lambda r: (-r.sort_score(), r.trial_id))
            population = population[: evo.population]

    complete = [r for r in history if r.status == "complete"]
    if not complete:
        raise NoCompleteTrialError(
            f"all {len(history)} trials were pruned or failed; no candidate survived"
        )
    best = max(complete, key=lambda r: (r.score, -r.trial_id))
    logger.info("study done: %d trials, best score %.6f (trial %d)",
                len(history), best.score, best.trial_id)
    return best, history


# --- history persistence ---------------------------------------------------------


def record_to_json(record: TrialRecord) -> dict:
    return {
        "trial_id": record.trial_id,
        "seed": record.seed,
        "status": record.status,
        "score": record.score,
        "violated": record.violated,
        "error": record.error,
        "metrics": record.metrics,
        "trace": [[key, value] for key, value in record.trace],
    }


def write_history(history: list[TrialRecord], path: str) -> None:
    """One JSON object per line, ordered by trial id."""
    with open(path, "w", encoding="utf-8") as fh:
        for record in sorted(history, key=lambda r: r.trial_id):
            fh.write(json.dumps(record_to_json(record), separators=(",", ":")))
            fh.write("\n")


def load_history(path: str) -> list[TrialRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            doc = json.loads(line)
            records.append(
                TrialRecord(
                    trial_id=doc["trial_id"],
                    seed=doc["seed"],
                    trace=tuple((k, v) for k, v in doc["trace"]),
                    status=doc["status"],
                    metrics=doc["metrics"],
                    score=doc["score"],
                    violated=doc["violated"],
                    error=doc["error"],
                )
            )
    return records
