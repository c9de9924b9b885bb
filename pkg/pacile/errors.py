"""
Exception hierarchy shared by the library and the command line
"""
from typing import Any, Optional


class PacIleError(Exception):
    """Base error: a human readable detail plus the process exit code the CLI reports."""

    exit_code: int = 2

    def __init__(self, detail: str, exit_code: Optional[int] = None):
        super().__init__(detail)
        self.detail = detail
        if exit_code is not None:
            self.exit_code = exit_code

    def __str__(self) -> str:
        return self.detail


class InputError(PacIleError, ValueError):
    """Domain, range or shape violation in the arguments of an operation"""


class ConfigError(PacIleError):
    """Invalid or unknown configuration keys"""


class DatasetParseError(PacIleError):
    """Malformed dataset file; `line` is 1-based and counts the header row"""

    def __init__(self, detail: str, line: Optional[int] = None):
        if line is not None:
            detail = f"line {line}: {detail}"
        super().__init__(detail)
        self.line = line


class PreconditionError(PacIleError):
    """A bound precondition does not hold on the supplied data"""


class NumericalError(PacIleError):
    exit_code = 1

    def __init__(self, detail: str, condition: Optional[float] = None):
        if condition is not None:
            detail = f"{detail} (condition estimate {condition:.3e})"
        super().__init__(detail)
        self.condition = condition


class OptimizationDiverged(PacIleError):
    exit_code = 1

    def __init__(self, detail: str, state: Any = None):
        super().__init__(detail)
        self.state = state


class ValidationFailure(PacIleError):
    """At least one validation check failed"""

    exit_code = 1


class PacIleWarning(UserWarning):
    """Non-fatal precondition flags (results are computed but not certified)"""


__all__ = [
    "PacIleError",
    "InputError",
    "ConfigError",
    "DatasetParseError",
    "PreconditionError",
    "NumericalError",
    "OptimizationDiverged",
    "ValidationFailure",
    "PacIleWarning",
]
