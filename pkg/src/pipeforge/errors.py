"""Exception types shared across the package."""


class EmptyContactsError(ValueError):
    """Raised when an operation that needs at least one contact gets none."""


class DegenerateGeometryError(ValueError):
    """Raised when geometry is too ill-conditioned to produce a result
    (e.g. fitting a plane to collinear points)."""


class ProtocolError(RuntimeError):
    """Raised on API misuse: stepping a finished episode, draining an
    underfull buffer, malformed teleop messages, and similar."""


class SchemaViolationError(ValueError):
    """Raised when a serialized record does not match the expected schema."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ConfigError(ValueError):
    """Raised for unknown config keys or values that fail validation."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key
