"""Exception hierarchy.

Every error carries a short ``kind`` string; the CLI prints it as the
machine-greppable prefix ``error[<kind>]``.
"""

from __future__ import annotations


class CtmcCheckError(Exception):
    kind = "error"


class ModelError(CtmcCheckError):
    """An error located in model or property source text."""

    kind = "model"

    def __init__(self, message: str, line: int | None = None, col: int | None = None):
        self.message = message
        self.line = line
        self.col = col
        if line is not None:
            message = f"{message} (line {line}, column {col})"
        super().__init__(message)

    @property
    def position(self) -> tuple[int, int] | None:
        if self.line is None:
            return None
        return (self.line, self.col)


class LexError(ModelError):
    kind = "lex"


class ParseError(ModelError):
    kind = "syntax"


class ValidationError(ModelError):
    kind = "validation"

    def __init__(self, message, line=None, col=None, reason: str = "invalid"):
        self.reason = reason
        super().__init__(message, line, col)


class BuildError(CtmcCheckError):
    kind = "build"


class StateSpaceLimitError(BuildError):
    def __init__(self, count: int, limit: int):
        self.count = count
        self.limit = limit
        super().__init__(f"state space exceeds cap: {count} states discovered, limit {limit}")


class NumericsError(CtmcCheckError):
    kind = "numerics"


class SolverError(NumericsError):
    kind = "solver"

    def __init__(self, message: str, iterations: int, residual: float):
        self.iterations = iterations
        self.residual = residual
        super().__init__(f"{message} after {iterations} iterations (residual {residual:.3e})")


class CheckError(CtmcCheckError):
    kind = "check"


class ExperimentError(CtmcCheckError):
    kind = "experiment"


class IoError(CtmcCheckError):
    """A model, property, rate or output file could not be read or written."""

    kind = "io"
