"""Hardware-aware neural architecture exploration.

A declarative YAML search-space language is compiled into a sampleable space;
candidates become shape-checked model graphs, are scored by staged criteria,
and can be translated into deployable C sources benchmarked on a simulated
device, with measurements fed back into the search loop.
"""

from .backend import (
    BenchmarkResult,
    CapabilitySet,
    CSourceBackend,
    DeviceModel,
    GeneratorPipeline,
    benchmark,
    export_json,
    get_backend,
    import_json,
    read_json,
    reflect,
    restrict_spec,
    write_json,
)
from .builder import ModelGraph, build_model, describe
from .codegen_c import generate_c
from .domains import ParamDomain
from .enumeration import count_configurations, enumerate_space
from .errors import ArchexError
from .estimators import (
    CriteriaSet,
    EvalContext,
    MetricValue,
    OptimizationCriteria,
    SyntheticPerformanceProxy,
    estimate_flops,
    estimate_latency,
    estimate_memory,
    estimate_params,
    evaluate_trial,
    scalarize,
)
from .preproc import ResolvedPreproc, apply_preproc, preproc_output_shape
from .registry import (
    LayerBuilder,
    LayerConfig,
    LayerRegistry,
    ParamSpec,
    TransitionEntry,
    builtin_registry,
    default_registry,
    register_layer,
)
from .runtime import forward, forward_counted, init_params, register_op_semantics
from .sampler import (
    ArchitectureIR,
    RandomTrialSource,
    ReplayTrialSource,
    ResolvedLayer,
    parameter_domains,
    parameter_keys,
    replay_architecture,
    sample_architecture,
)
from .search import (
    EvolutionParams,
    StudyConfig,
    TrialRecord,
    load_history,
    mutate,
    run_study,
    trial_seed,
    write_history,
)
from .shapes import CHANNELLED_SEQUENCE, FLAT_VECTOR, TensorShape
from .space import SearchSpaceSpec, load_spec, parse_spec, spec_to_yaml, validate_spec

__version__ = "0.1.0"
