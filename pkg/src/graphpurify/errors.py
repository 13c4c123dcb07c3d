"""Exception types shared across the package."""


class GraphPurifyError(Exception):
    """Base class for all package errors."""


class ContractError(GraphPurifyError):
    """A documented precondition was violated by the caller."""


class ShapeError(ContractError):
    """Tensor or matrix dimensions do not line up."""


class ConfigError(GraphPurifyError):
    """Invalid configuration value."""


class DatasetError(GraphPurifyError):
    """Dataset could not be loaded."""


class FormatError(DatasetError):
    """Dataset file exists but its contents are malformed."""


class GraphTooSmallError(ContractError):
    """Graph has fewer nodes than the subgraph being placed into it."""


class PoisoningInfeasibleError(GraphPurifyError):
    """No training graph is large enough to host the trigger."""


class DegenerateInputError(GraphPurifyError):
    """Numerically degenerate input, e.g. cosine of a zero vector."""


class FrozenModelError(ContractError):
    """Attempted to update the parameters of a frozen model."""


class OptimizationError(GraphPurifyError):
    """An optimization loop produced a non-finite loss."""


class MetricError(GraphPurifyError):
    """A metric was requested on an empty or degenerate evaluation set."""
