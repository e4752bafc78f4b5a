"""
Exception hierarchy shared by the numerical modules and the command line.

Every failure class maps to one CLI exit code (see EXIT_CODES); the mapping is
the only place the command line needs to know about solver internals.
"""

from __future__ import annotations


class CritPointError(Exception):
    """Base class for every failure raised by this package."""


class ConfigError(CritPointError):
    """Run configuration is missing keys, has unknown keys or bad values."""


class GridMismatchError(CritPointError, ValueError):
    """A field, potential or parameter set belongs to a different grid."""


class ConvergenceError(CritPointError):
    """An iterative solver hit its budget with the residual above tolerance."""

    def __init__(self, message: str, residual_norm: float = float("nan"), iterations: int = 0):
        super().__init__(message)
        self.residual_norm = residual_norm
        self.iterations = iterations


class NewtonDivergenceError(ConvergenceError):
    """Damped Newton could not reduce the residual."""


class BracketError(CritPointError):
    """The ray energy J_i(tU) does not cross c_i/4 where it must."""


class SemitrivialCollapseError(CritPointError):
    """Newton converged, but one component fell below the nontriviality threshold."""

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class ContinuationError(CritPointError):
    """A solve inside a β continuation failed; carries β and the reports so far."""

    def __init__(self, beta: float, reports: list, cause: Exception):
        super().__init__(f"continuation failed at beta={beta:.6g}: {cause}")
        self.beta = beta
        self.reports = reports
        self.cause = cause


class StageError(CritPointError):
    """A stage of the end-to-end experiment failed; partial artifacts are kept."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


EXIT_OK = 0
EXIT_SOLVER_FAILURE = 1
EXIT_CONFIG_ERROR = 2
EXIT_SEMITRIVIAL = 3
EXIT_HYPOTHESIS_FAILED = 4


def exit_code_for(exc: BaseException) -> int:
    """Map an exception to the documented CLI exit code."""
    if isinstance(exc, StageError):
        return exit_code_for(exc.cause)
    if isinstance(exc, ContinuationError):
        return exit_code_for(exc.cause)
    if isinstance(exc, SemitrivialCollapseError):
        return EXIT_SEMITRIVIAL
    if isinstance(exc, (ConfigError, GridMismatchError)):
        return EXIT_CONFIG_ERROR
    if isinstance(exc, (ConvergenceError, BracketError)):
        return EXIT_SOLVER_FAILURE
    return EXIT_SOLVER_FAILURE
