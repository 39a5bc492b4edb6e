"""Exception types shared across the package."""


class FedStackError(Exception):
    """Base class for all errors raised by this package."""


class ShapeMismatchError(FedStackError):
    """Array dimensions do not line up with what an operation expects."""


class PreconditionError(FedStackError):
    """An input violates a documented precondition."""


class ZeroVectorError(FedStackError):
    """Cosine similarity requested for a vector with zero norm."""


class CsvFormatError(FedStackError):
    """A CSV file could not be parsed into the expected structure."""


class ConfigError(FedStackError):
    """A run configuration is invalid or contains unknown keys."""


class StageError(FedStackError):
    """A pipeline stage failed; carries the stage name for diagnostics."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
