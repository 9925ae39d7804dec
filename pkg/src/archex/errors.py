"""Exception hierarchy shared across the package."""


class ArchexError(Exception):
    """Base class for every error raised by this package."""


class SpecError(ArchexError):
    """Base class for search-space specification problems."""


class SpecSyntaxError(SpecError):
    """The document is not valid YAML."""


class SchemaError(SpecError):
    """A required key is missing, unknown, or of the wrong kind."""


class SpecReferenceError(SpecError):
    """A name points at nothing: unknown op or composite, dangling or cyclic reference."""


class ParamError(SpecError):
    """A mandatory operation parameter cannot be resolved anywhere in the spec."""


class UnboundedError(SpecError):
    """A parameter domain is not finite (reserved; the DSL cannot express one today)."""


class LimitError(ArchexError):
    """The space is larger than the enumeration limit."""


class DuplicateError(ArchexError):
    """A registry name is already taken."""


class NoTransitionError(ArchexError):
    """No adapter is registered for a tensor-kind pair."""


class ResolutionError(ArchexError):
    """A sampled op or parameter could not be resolved at instantiation time."""


class ShapeError(ArchexError):
    """An operation rejects its input geometry."""


class ShapeMismatchError(ArchexError):
    """Runtime input does not match the graph's declared shape."""


class CapabilityError(ArchexError):
    """An operation or parameter value is not supported by the bound backend."""


class EstimatorFailure(ArchexError):
    """An estimator raised; the trial is failed, not pruned."""


class WeightError(ArchexError):
    """A criterion that needs a weight has none."""


class GeometryError(ArchexError):
    """A pre-processing stage empties the signal or cannot fit it."""


class NoCompleteTrialError(ArchexError):
    """Every trial of a study was pruned or failed."""


class CapacityError(ArchexError):
    """The model does not fit into the device's memory."""


class VersionError(ArchexError):
    """Unknown serialized format version."""
