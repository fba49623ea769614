"""Exception types shared across the package.

CLI exit-code mapping: ConfigError and bad arguments exit 1, numerical
failures (DivergenceError, gradient-check failure) exit 2.
"""


class VqaDistillError(Exception):
    """Base class for package errors."""


class ConfigError(VqaDistillError):
    """Invalid configuration: bad invariants, unknown group names, mode mismatches."""


class ShapeError(ValueError):
    """Tensor shape does not match the consuming contract."""

    def __init__(self, expected, actual, context=""):
        self.expected = tuple(expected)
        self.actual = tuple(actual)
        msg = f"expected shape {self.expected}, got {self.actual}"
        if context:
            msg = f"{context}: {msg}"
        super().__init__(msg)


class UndefinedCorrelationError(ValueError):
    """Correlation is undefined (a constant input vector)."""


class NumericalFailure(VqaDistillError):
    """Numerical failure: divergence or a failed gradient check."""


class DivergenceError(NumericalFailure):
    """Training produced a non-finite loss.

    Carries the step index and the offending loss breakdown.
    """

    def __init__(self, step, breakdown):
        self.step = step
        self.breakdown = breakdown
        super().__init__(f"non-finite loss at step {step}: {breakdown}")


class CheckpointError(VqaDistillError):
    """Checkpoint missing, unreadable, or incompatible with the config."""
