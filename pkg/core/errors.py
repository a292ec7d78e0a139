"""
Exception hierarchy for the Po4 solver.

Numerical outcomes (unbounded, infeasible, relaxation gap) are reported as
status values on result objects; these exceptions cover misuse and the
failures that must propagate to the caller.
"""
from typing import Any, Dict, Optional


class Po4Error(Exception):
    """Base class for every error raised by this package"""


class ConfigError(Po4Error, ValueError):
    """Invalid solver configuration value"""


class PathError(Po4Error, ValueError):
    """The requested solve path does not apply to the problem"""

    def __init__(self, message: str, path: Optional[str] = None):
        super().__init__(message)
        self.path = path


class ProblemFileError(Po4Error, ValueError):
    """A problem document could not be parsed into a Po4Problem"""

    def __init__(self, message: str, field_path: str = "", line: Optional[int] = None):
        self.field_path = field_path
        self.line = line
        location = field_path or "<document>"
        if line is not None:
            location = f"{location} (line {line})"
        super().__init__(f"{location}: {message}")


class SolverError(Po4Error, RuntimeError):
    """
    A subsolver failed in a way the caller cannot recover from.

    Args:
        message: Human readable description
        stage: Pipeline stage label such as "value", "bisection" or "qsic.case2"
        partial: Optional partial state collected before the failure
    """

    def __init__(self, message: str, stage: str, partial: Optional[Dict[str, Any]] = None):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.partial = partial or {}
