"""Exception types shared across the package."""

from __future__ import annotations


class SmckitError(Exception):
    """Base class for all errors raised by smckit."""


class ParseError(SmckitError):
    """Lexical or syntax error in a model source, with position."""

    def __init__(self, message: str, line: int | None = None, col: int | None = None):
        self.line = line
        self.col = col
        if line is not None:
            message = f"line {line}, col {col}: {message}"
        super().__init__(message)


class UnknownDistributionError(ParseError):
    """A stochastic declaration names a distribution the language does not admit."""


class CompileError(SmckitError):
    """Model source cannot be compiled into a node graph."""


class ParameterDomainError(SmckitError):
    """Distribution parameters outside their support (e.g. variance <= 0).

    ``node`` is filled in by callers that know which graph node was being
    evaluated when the error occurred.
    """

    def __init__(self, message: str, node: str | None = None):
        self.node = node
        self.bare_message = message
        if node is not None:
            message = f"node {node}: {message}"
        super().__init__(message)


class ContractViolationError(SmckitError):
    """An operation was applied to a node kind it must not touch."""


class DegenerateWeightsError(SmckitError):
    """Every particle has weight zero (all log-weights are -inf)."""


class ConfigError(SmckitError):
    """Invalid algorithm configuration or model/algorithm mismatch."""


class NumericalError(SmckitError):
    """Numerical failure during a run; ``time_step`` cites where (1-based)."""

    def __init__(self, message: str, time_step: int | None = None):
        self.time_step = time_step
        if time_step is not None:
            message = f"t={time_step}: {message}"
        super().__init__(message)
