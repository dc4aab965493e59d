"""Exception types raised across the package."""

from __future__ import annotations


class QuantDemodError(Exception):
    """Base class for all package errors."""


class DomainError(QuantDemodError, ValueError):
    """An argument lies outside the domain of the operation."""


class EvaluationError(QuantDemodError, ArithmeticError):
    """A callable returned a non-finite value.

    The offending abscissa is kept in ``x``.
    """

    def __init__(self, x: float, value: float):
        self.x = x
        self.value = value
        super().__init__(f"non-finite function value {value!r} at x={x!r}")


class BracketError(QuantDemodError, ValueError):
    """A root or peak bracket does not contain what it should."""


class ConvergenceError(QuantDemodError, RuntimeError):
    """An iterative solver stopped without meeting its tolerance.

    ``trace`` holds the per-iteration movement history.
    """

    def __init__(self, message: str, trace=None):
        self.trace = list(trace) if trace is not None else []
        super().__init__(message)


class CellCollapseError(QuantDemodError, RuntimeError):
    """A quantizer output lost every interval during reassignment."""

    def __init__(self, output: int):
        self.output = output
        super().__init__(f"quantized output {output} received no interval")


class ConfigError(QuantDemodError, ValueError):
    """Invalid simulation or CLI configuration."""
