"""Shared exception types."""


class DialectMTError(Exception):
    """Base class for all package errors."""


class DimensionError(DialectMTError):
    """Shapes or lengths do not line up."""


class EmptyInputError(DialectMTError):
    """An operation received an empty corpus, batch, or mask."""


class ConfigError(DialectMTError):
    """Invalid or inconsistent configuration."""


class CheckpointError(DialectMTError):
    """Checkpoint file is malformed, truncated, or incompatible."""


class InstabilityError(DialectMTError):
    """A numeric check encountered non-finite intermediates."""


class PipelineError(DialectMTError):
    """A frontend stage failed; carries the stage name and the trace so far."""

    def __init__(self, stage: str, trace, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.trace = trace
        self.cause = cause
