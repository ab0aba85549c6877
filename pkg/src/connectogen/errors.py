"""Exception taxonomy shared by all connectogen modules."""


class DimensionError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class PreconditionError(ValueError):
    """An argument violates a documented precondition."""


class ValidationError(ValueError):
    """Data fails a structural invariant (symmetry, nonnegativity, NaN, ...)."""


class IngestionError(ValidationError):
    """A dataset on disk is missing, malformed, or inconsistent."""


class TapeError(RuntimeError):
    """Misuse of an autodiff tape (reuse, detached tensors, cross-tape mixing)."""


class SerializationError(RuntimeError):
    """A model file is corrupt, truncated, or has the wrong format version."""


class NumericError(ArithmeticError):
    """A numeric routine failed to converge or hit a degenerate input."""


class DegenerateError(NumericError):
    """Input is degenerate for the requested computation (e.g. all-zero graph)."""


class TrainingError(RuntimeError):
    """The training loop cannot proceed with the given data/configuration."""
