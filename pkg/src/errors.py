"""Exception hierarchy shared by the numerical modules, the CLI and the API.

Every error carries the process exit code the CLI reports for it.
"""
from typing import Any, List, Optional


class DimerlabError(Exception):
    exit_code = 1


class ValidationFailure(DimerlabError):
    """One or more user inputs were rejected; `messages` lists all of them."""

    exit_code = 2

    def __init__(self, messages: List[str]):
        self.messages = list(messages)
        super().__init__("; ".join(self.messages))


class BudgetExceeded(DimerlabError):
    """A run stopped early because the accumulated cutoff error hit its budget."""

    exit_code = 3

    def __init__(self, message: str, partial: Any = None):
        self.partial = partial
        super().__init__(message)


class NumericalFailure(DimerlabError):
    exit_code = 4

    def __init__(self, message: str, time: Optional[float] = None):
        self.time = time
        if time is not None:
            message = f"{message} (at t={time:.6g})"
        super().__init__(message)


class KinematicsDomainError(DimerlabError, ValueError):
    """Quasi-momentum or ratio outside the domain of a scattering formula."""


class DegenerateCollision(DimerlabError):
    """Only the identity solves momentum and energy conservation."""


class NoCollision(DimerlabError):
    """Two defects with equal group velocity never meet."""


class OffGridMomentum(DimerlabError, ValueError):
    pass


class SizeBudgetError(DimerlabError, ValueError):
    pass


class CutoffError(DimerlabError, ValueError):
    """Requested occupation does not fit the local Hilbert space."""


class InvalidDefectPlacement(DimerlabError, ValueError):
    pass


class SectorError(DimerlabError):
    """A gate or tensor mixes particle-number sectors."""


class ThetaIndexError(DimerlabError, IndexError):
    pass


class SectorMismatchWarning(UserWarning):
    """Overlap requested between states of different total particle number."""
