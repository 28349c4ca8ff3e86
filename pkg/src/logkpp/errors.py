"""Exception hierarchy.

``ModelError`` covers invalid inputs (CLI exit code 1); everything derived from
``NumericalError`` is a failure of a computation on valid inputs (exit code 2).
"""
from __future__ import annotations


class ModelError(ValueError):
    """Invalid parameters or malformed input data."""


class NumericalError(RuntimeError):
    """A solver could not produce a trustworthy result."""


class SchemeViolation(NumericalError):
    """State left the admissible range [0, nu) before clamping."""


class BranchViolation(NumericalError):
    """Profile crossed the barrier curve where it must stay below it."""


class AsymptoticRegimeError(NumericalError):
    """Compensated tail statistic is not flat over the requested window."""


class WindowBreach(NumericalError):
    """The front ran into the edge of the computational window."""


class NoLawError(NumericalError):
    """Delay data does not follow the fitted functional form."""


class BoundNotFound(NumericalError):
    """No admissible constant satisfies a heat-kernel bound."""
