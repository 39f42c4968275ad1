"""Exception taxonomy shared across the package.

Every error raised by arlearn derives from ArlearnError, so callers can
catch the whole family. The CLI maps subclasses to exit codes.
"""


class ArlearnError(Exception):
    """Base class for all arlearn errors."""


class ShapeError(ArlearnError, ValueError):
    """Array shapes incompatible with the requested operation."""


class ConfigError(ArlearnError, ValueError):
    """Invalid configuration value or malformed config document."""


class DomainError(ArlearnError, ValueError):
    """Numeric input outside the mathematical domain (e.g. ages <= 0)."""


class UsageError(ArlearnError, RuntimeError):
    """API called in an unsupported way (missing cache, missing labels, ...)."""


class ParseError(ArlearnError, ValueError):
    """Malformed input file; carries the offending 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class TrainingError(ArlearnError, RuntimeError):
    """Training diverged or produced non-finite values."""


class SerializationError(ArlearnError, ValueError):
    """Value cannot be represented in the canonical text formats."""
