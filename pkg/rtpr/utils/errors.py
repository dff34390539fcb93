"""
Exception classes shared by every rtpr module.

Each class carries the process exit code the command line front end uses for
it, so a failing ``rtpr fit`` can be told apart from a bad input file by the
calling shell script.
"""


class RtprError(Exception):
    """Base class for all rtpr errors."""
    exit_code = 1


class InputError(RtprError, ValueError):
    """
    Raised on malformed user input: wrong shapes, unreadable files, unknown
    config keys, dimension mismatches.
    """
    exit_code = 2


class DomainError(InputError):
    """Raised when a parameter lies outside its mathematical domain (e.g. nu <= 1, r <= 0)."""


class EstimationError(RtprError):
    """
    Raised when an iterative estimation step does not converge.

    Parameters
    ----------
    message : str
        Human readable description of the failure.
    last_iterate : optional
        Last iterate of the failing solver (RandomEffects for the inner solve).
    result : optional
        Best FitResult reached by the outer optimizer, if any.
    diagnostics : dict, optional
        Iteration counts, gradient norms and anything else useful for replay.
    """
    exit_code = 3

    def __init__(self, message: str, last_iterate=None, result=None, diagnostics: dict = None) -> None:
        super().__init__(message)
        self.last_iterate = last_iterate
        self.result = result
        self.diagnostics = diagnostics or {}


class NumericError(RtprError, ArithmeticError):
    """Raised on factorization failures and non-finite intermediate values."""
    exit_code = 4


class UnsupportedModelError(RtprError):
    """Raised when an operation is not defined for the configured model."""
    exit_code = 5
