"""Error taxonomy shared by every module, with CLI exit codes attached."""

from pathlib import Path


class ReidError(Exception):
    """Base class for toolkit errors."""

    exit_code = 1


class ShapeError(ReidError, ValueError):
    """Operand shapes are incompatible with an operation."""

    exit_code = 2


class ConfigError(ReidError, ValueError):
    """Configuration or usage validation failed."""

    exit_code = 2


class NumericalError(ReidError, ArithmeticError):
    """A non-finite value appeared where training cannot continue."""

    exit_code = 3

    def __init__(self, message: str, diagnostics: dict[str, object] | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class DatasetIOError(ReidError, OSError):
    """A dataset, flow, checkpoint or feature file could not be read or written."""

    exit_code = 4

    def __init__(self, message: str, path: Path | str | None = None):
        super().__init__(f"{message} ({path})" if path is not None else message)
        self.path = str(path) if path is not None else None


class TrackletTooShortError(DatasetIOError):
    """A tracklet has fewer frames than the requested sequence length."""


class FormatError(DatasetIOError):
    """A binary file has the wrong magic bytes, version or length."""


def format_error(error: Exception, error_category: str = "Unexpected error") -> str:
    """
    Format an exception into a structured error message.

    Creates error messages with consistent format:
    "{error_category}: {exception_type}: {error_details}"

    Args:
        error: The exception that occurred
        error_category: Error category prefix (e.g., "Training aborted")

    Returns:
        str: Formatted error message for logs and stderr
    """
    return f"{error_category}: {type(error).__name__}: {error}"
