"""Command-line entry point: inspect a space, explore it, emit artifacts.

Exit codes: 0 ok, 2 invalid spec or study file, 3 no complete trial,
4 capability error, 1 anything else. Logs go to stderr; machine-readable
outputs go to files only.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import yaml

from .backend import (
    DeviceModel,
    benchmark,
    get_backend,
    read_json,
    reflect,
    restrict_spec,
    write_json,
)
from .enumeration import count_configurations
from .errors import (
    ArchexError,
    CapabilityError,
    NoCompleteTrialError,
    SchemaError,
    SpecError,
)
from .estimators import (
    CriteriaSet,
    MetricValue,
    OptimizationCriteria,
    SyntheticPerformanceProxy,
    estimate_flops,
    estimate_latency,
    estimate_memory,
    estimate_params,
)
from .runtime import init_params
from .sampler import RandomTrialSource, parameter_domains, replay_architecture, sample_architecture
from .search import EvolutionParams, StudyConfig, run_study, trial_seed, write_history
from .space import load_spec
from .builder import build_model
from .preproc import preproc_output_shape

logger = logging.getLogger("archex")

_STUDY_KEYS = {
    "space", "out_dir", "seed", "budget", "sampler", "parallelism",
    "hardware_in_loop", "device", "backend", "evolution", "proxy", "criteria",
}
_CRITERION_KEYS = {"name", "estimator", "kind", "weight", "threshold", "bounds"}
_ESTIMATORS = ("params", "flops", "memory", "latency", "proxy")


def _ir_summary(ir) -> str:
    parts = []
    if ir.preproc is not None:
        for stage in ir.preproc.stages:
            args = ",".join(f"{k}={v}" for k, v in stage.params.items())
            parts.append(f"{stage.op_name}({args})" if args else stage.op_name)
    for layer in ir.layers:
        args = ",".join(f"{k}={v}" for k, v in layer.params.items())
        parts.append(f"{layer.op_name}({args})" if args else layer.op_name)
    return " -> ".join(parts)


def cmd_inspect(args) -> int:
    spec = load_spec(args.space)
    print(f"valid; {count_configurations(spec)} configurations")
    domains = parameter_domains(spec)
    if domains:
        print("parameter keys:")
        for key, domain in domains.items():
            print(f"  {key}  {list(domain.values)}")
    if args.sample:
        for i in range(args.sample):
            ir = sample_architecture(spec, RandomTrialSource(trial_seed(args.seed, i)))
            print(f"sample {i}: {_ir_summary(ir)}")
    return 0


def _make_estimator(name: str, device, hardware_in_loop: bool, proxy_cfg: dict):
    if name == "params":
        return lambda ctx: estimate_params(ctx.graph)
    if name == "flops":
        return lambda ctx: estimate_flops(ctx.graph)
    if name == "memory":
        return lambda ctx: estimate_memory(ctx.graph)
    if name == "latency":
        if hardware_in_loop:
            return lambda ctx: MetricValue(
                "latency", benchmark(ctx.graph, ctx.device, ctx.trial_seed).latency_s, "minimize", "s"
            )
        return lambda ctx: estimate_latency(ctx.graph, ctx.device)
    if name == "proxy":
        return SyntheticPerformanceProxy(
            seed=proxy_cfg.get("seed", 0), locality=proxy_cfg.get("locality", 0.7)
        )
    raise SchemaError(f"unknown estimator '{name}' (expected one of {list(_ESTIMATORS)})")


def _parse_criteria(raw, device, hardware_in_loop: bool, proxy_cfg: dict) -> CriteriaSet:
    if not isinstance(raw, list) or not raw:
        raise SchemaError("'criteria' must be a non-empty list")
    needs_device = any(c.get("estimator") == "latency" for c in raw if isinstance(c, dict))
    if needs_device and device is None:
        raise SchemaError("a latency criterion needs a 'device' section")
    criteria = []
    if hardware_in_loop:
        # Benchmarking rejects over-capacity models, so gate on memory up front.
        criteria.append(
            OptimizationCriteria(
                name="device_memory",
                kind="hard_constraint",
                estimate=lambda ctx: estimate_memory(ctx.graph),
                threshold=float(device.memory_capacity),
            )
        )
    for node in raw:
        if not isinstance(node, dict):
            raise SchemaError("each criterion must be a mapping")
        unknown = set(node) - _CRITERION_KEYS
        if unknown:
            raise SchemaError(f"unknown criterion key(s): {sorted(unknown)}")
        for key in ("name", "estimator", "kind"):
            if key not in node:
                raise SchemaError(f"criterion is missing '{key}'")
        bounds = node.get("bounds")
        criteria.append(
            OptimizationCriteria(
                name=node["name"],
                kind=node["kind"],
                estimate=_make_estimator(node["estimator"], device, hardware_in_loop, proxy_cfg),
                weight=node.get("weight"),
                threshold=node.get("threshold"),
                bounds=tuple(bounds) if bounds is not None else None,
            )
        )
    return CriteriaSet(criteria=tuple(criteria))


def _load_study(path: str, args) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh.read())
    if not isinstance(doc, dict):
        raise SchemaError("study file must be a mapping")
    unknown = set(doc) - _STUDY_KEYS
    if unknown:
        raise SchemaError(f"unknown study key(s): {sorted(unknown)}")
    if "space" not in doc:
        raise SchemaError("study file is missing 'space'")
    if "criteria" not in doc:
        raise SchemaError("study file is missing 'criteria'")
    # Flags win over study-file fields.
    for flag in ("seed", "budget", "sampler", "parallelism", "out"):
        value = getattr(args, flag, None)
        if value is not None:
            doc["out_dir" if flag == "out" else flag] = value
    if args.hardware_in_loop:
        doc["hardware_in_loop"] = True
    doc.setdefault("seed", 0)
    doc.setdefault("budget", 50)
    doc.setdefault("sampler", "random")
    doc.setdefault("parallelism", 1)
    doc.setdefault("hardware_in_loop", False)
    doc.setdefault("out_dir", "results")
    return doc


def cmd_explore(args) -> int:
    doc = _load_study(args.study, args)
    space_path = doc["space"]
    if not os.path.isabs(space_path):
        space_path = os.path.join(os.path.dirname(os.path.abspath(args.study)), space_path)
    spec = load_spec(space_path)

    try:
        device = DeviceModel(**doc["device"]) if "device" in doc else None
        evolution = EvolutionParams(**doc.get("evolution", {}))
    except TypeError as exc:
        raise SchemaError(f"bad device/evolution section: {exc}") from exc
    hardware_in_loop = bool(doc["hardware_in_loop"])
    if hardware_in_loop and device is None:
        device = DeviceModel()
    capabilities = None
    if doc.get("backend") is not None or hardware_in_loop:
        backend = get_backend(doc.get("backend") or "c")
        capabilities = reflect(backend)
        spec = restrict_spec(spec, capabilities)

    criteria = _parse_criteria(doc["criteria"], device, hardware_in_loop, doc.get("proxy", {}))
    config = StudyConfig(
        budget=int(doc["budget"]),
        criteria=criteria,
        seed=int(doc["seed"]),
        sampler=doc["sampler"],
        parallelism=int(doc["parallelism"]),
        device=device,
        capabilities=capabilities,
        evolution=evolution,
    )

    best, history = run_study(spec, config)

    out_dir = doc["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    write_history(history, os.path.join(out_dir, "history.jsonl"))

    ir = replay_architecture(spec, best.trace)
    in_shape = spec.input_shape
    if ir.preproc is not None:
        in_shape = preproc_output_shape(ir.preproc, spec.input_shape)
    graph = build_model(ir, in_shape, spec.output_shape, capabilities)
    write_json(graph, os.path.join(out_dir, "best.json"), init_params(graph, best.seed))

    statuses = {s: sum(1 for r in history if r.status == s) for s in ("complete", "pruned", "failed")}
    lines = [
        f"trials: {len(history)} (complete {statuses['complete']}, "
        f"pruned {statuses['pruned']}, failed {statuses['failed']})",
        f"best trial: {best.trial_id} score {best.score:.6f}",
        "best metrics: " + ", ".join(f"{k}={v:.6g}" for k, v in best.metrics.items()),
        f"best architecture: {_ir_summary(ir)}",
    ]
    summary = "\n".join(lines) + "\n"
    with open(os.path.join(out_dir, "summary.txt"), "w", encoding="utf-8") as fh:
        fh.write(summary)
    print(summary, end="")
    return 0


def cmd_emit(args) -> int:
    graph, params = read_json(args.model)
    if params is None:
        params = init_params(graph, args.seed)
    os.makedirs(args.out, exist_ok=True)
    if args.target == "json":
        write_json(graph, os.path.join(args.out, "model.json"), params)
        print(os.path.join(args.out, "model.json"))
        return 0
    backend = get_backend("c")
    bundle = backend.generate(graph, params)
    for name, content in bundle.items():
        with open(os.path.join(args.out, name), "w", encoding="utf-8") as fh:
            fh.write(content)
    for name in sorted(bundle):
        print(os.path.join(args.out, name))
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="archex", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_inspect = sub.add_parser("inspect", help="validate a space and report its cardinality")
    p_inspect.add_argument("space", help="search-space YAML file")
    p_inspect.add_argument("--sample", type=int, default=0, metavar="N",
                           help="print N deterministic sampled candidates")
    p_inspect.add_argument("--seed", type=int, default=0)
    p_inspect.set_defaults(fn=cmd_inspect)

    p_explore = sub.add_parser("explore", help="run a study and write history/best artifacts")
    p_explore.add_argument("study", help="study YAML file")
    p_explore.add_argument("--seed", type=int, default=None)
    p_explore.add_argument("--budget", type=int, default=None)
    p_explore.add_argument("--sampler", choices=("random", "evolutionary"), default=None)
    p_explore.add_argument("--parallelism", type=int, default=None)
    p_explore.add_argument("--hardware-in-loop", action="store_true",
                           help="source the latency metric from the simulated device")
    p_explore.add_argument("--out", default=None, help="output directory (wins over study file)")
    p_explore.set_defaults(fn=cmd_explore)

    p_emit = sub.add_parser("emit", help="translate an exported graph into an artifact")
    p_emit.add_argument("model", help="graph JSON file (e.g. best.json)")
    p_emit.add_argument("--target", choices=("c", "json"), default="c")
    p_emit.add_argument("--out", default="emitted")
    p_emit.add_argument("--seed", type=int, default=0,
                        help="weight init seed when the file has no embedded weights")
    p_emit.set_defaults(fn=cmd_emit)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    args = _build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except SpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NoCompleteTrialError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except CapabilityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except (ArchexError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
