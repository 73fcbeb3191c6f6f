"""Exception types shared across the package."""


class DemoireError(Exception):
    """Base class for all package-specific errors."""


class ShapeError(DemoireError, ValueError):
    """Tensor shapes are inconsistent with what an operation requires."""


class InvalidInputError(DemoireError, ValueError):
    """Input values violate a precondition (non-finite, out of range)."""


class ConfigurationError(DemoireError, ValueError):
    """A configuration object or parameter combination is invalid."""


class IngestionError(DemoireError, RuntimeError):
    """A dataset directory is malformed or incomplete."""


class CheckpointMismatchError(DemoireError, RuntimeError):
    """A checkpoint does not match the model it is being loaded into."""


class TrainingDivergedError(DemoireError, RuntimeError):
    """Training hit a non-finite loss and was aborted."""
