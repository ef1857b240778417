"""Exception types shared across the package."""


class SSFLError(Exception):
    """Base class for all package errors."""


class ConfigError(SSFLError, ValueError):
    """Invalid configuration or hyperparameter."""


class ShapeError(SSFLError, ValueError):
    """Tensor or parameter structure mismatch."""


class DomainError(SSFLError, ValueError):
    """Argument outside the domain of an operation."""


class StateError(SSFLError, RuntimeError):
    """Operation called in the wrong state (e.g. backward without forward)."""


class ExperimentError(SSFLError, RuntimeError):
    """An experiment cannot proceed."""


class FormatError(SSFLError, ValueError):
    """Malformed binary or text file.

    ``offset`` is the byte offset (or line number for text files) where
    parsing failed.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at offset {offset})"
        super().__init__(message)
        self.offset = offset
