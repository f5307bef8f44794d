"""Exception hierarchy shared by every gpsindy module."""

from __future__ import annotations


class GPSINDyError(Exception):
    """Base class for all errors raised by this package."""


class InsufficientData(GPSINDyError, ValueError):
    pass


class InvalidTimestamps(GPSINDyError, ValueError):
    pass


class InvalidFraction(GPSINDyError, ValueError):
    pass


class InvalidFactor(GPSINDyError, ValueError):
    pass


class DegenerateColumn(GPSINDyError, ValueError):
    """A column has zero variance and cannot be standardized."""

    def __init__(self, column: int, message: str | None = None):
        self.column = column
        super().__init__(message or f"column {column} has zero variance")


class ParseError(GPSINDyError, ValueError):
    """Malformed trajectory CSV. ``line`` is 1-based, or None for file-level problems."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class DimensionError(GPSINDyError, ValueError):
    pass


class InvalidInput(GPSINDyError, ValueError):
    pass


class IllConditioned(GPSINDyError, ArithmeticError):
    """Cholesky factorization failed even at the largest allowed jitter."""

    def __init__(self, message: str, jitter: float | None = None):
        self.jitter = jitter
        if jitter is not None:
            message = f"{message} (final jitter {jitter:.3g})"
        super().__init__(message)


class OptimizationFailed(GPSINDyError, ArithmeticError):
    pass


class IncompatibleLibrary(GPSINDyError, ValueError):
    pass


class Divergence(GPSINDyError, ArithmeticError):
    """Integration produced a non-finite state."""

    def __init__(self, step: int, message: str | None = None):
        self.step = step
        super().__init__(message or f"non-finite state at step {step}")


class DivergentModel(GPSINDyError, ArithmeticError):
    """Every candidate model for a column diverged during validation rollout."""

    def __init__(self, column: int):
        self.column = column
        super().__init__(f"all candidate models diverge for column {column}")


class EmptySample(GPSINDyError, ValueError):
    pass


class ConfigError(GPSINDyError, ValueError):
    pass
