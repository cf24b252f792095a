# app/errors.py
from __future__ import annotations
from typing import Any, Optional


class SviLabError(Exception):
    """Base class for every error raised by the library and the harness."""


class InvalidArgumentError(SviLabError, ValueError):
    pass


class UnsupportedOperationError(SviLabError):
    pass


class ConvergenceFailureError(SviLabError):
    def __init__(self, message: str, *, last_residual: float, iterations: int):
        super().__init__(f"{message} (residual={last_residual:.3e} after {iterations} iterations)")
        self.last_residual = last_residual
        self.iterations = iterations


class PoisonedStateError(SviLabError):
    def __init__(self, message: str, *, iteration: int, values: Any = None):
        super().__init__(f"{message} at iteration {iteration}")
        self.iteration = iteration
        self.values = values


class ConfigError(SviLabError):
    def __init__(self, message: str, *, line: Optional[int] = None, column: Optional[int] = None):
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"{message}{where}")
        self.line = line
        self.column = column


class PathError(SviLabError):
    """A solver error annotated with the sample path that raised it."""

    def __init__(self, path_id: int, cause: SviLabError):
        iteration = getattr(cause, "iteration", None)
        at = f", iteration {iteration}" if iteration is not None else ""
        super().__init__(f"path {path_id}{at}: {cause}")
        self.path_id = path_id
        self.iteration = iteration
        self.cause = cause
