"""Exception types shared across the package."""


class ImputeRankError(Exception):
    """Base class for all package-specific errors."""


class ParseError(ImputeRankError):
    """A CSV file is malformed (wrong arity, missing header, ...)."""


class SchemaError(ImputeRankError):
    """A cell token is not valid under an explicitly supplied schema."""


class ContractError(ImputeRankError, ValueError):
    """An operation was called with arguments violating its contract."""


class InsufficientDataError(ImputeRankError):
    """Not enough fully observed rows to train a reference model."""


class TrainingDivergedError(ImputeRankError):
    """An optimizer produced a non-finite objective or parameters."""


class UnsupportedError(ImputeRankError):
    """The requested operation is outside the supported range."""


class ConfigError(ImputeRankError):
    """A run configuration is invalid."""


class PipelineError(ImputeRankError):
    """A pipeline stage failed; the message carries the stage name."""
