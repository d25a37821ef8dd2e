"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid or unsupported configuration."""


class DimensionError(ValueError):
    """Array shape does not match what the operation requires."""


class DomainError(ValueError):
    """Input lies outside the mathematical domain of the operation."""


class ParseError(ValueError):
    """Malformed input file. ``line`` is 1-based and counts the header."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NumericalAbort(RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch, batch, value):
        self.epoch = epoch
        self.batch = batch
        self.value = value
        super().__init__(f"non-finite loss {value!r} at epoch {epoch}, batch {batch}")
