"""Exception hierarchy shared across the package."""


class HDSpectraError(Exception):
    """Base class for all package errors."""


class DomainError(HDSpectraError, ValueError):
    """An argument lies outside the region where a quantity is defined."""


class ConvergenceError(HDSpectraError, RuntimeError):
    """An iterative solver failed to converge."""


class NotDistantSpike(DomainError):
    """A sample eigenvalue does not lie in the image of the distant-spike domain.

    ``threshold`` carries the boundary value psi(S_psi) when it is known.
    """

    def __init__(self, message, threshold=None):
        super().__init__(message)
        self.threshold = threshold


class SeparationError(DomainError):
    """Evaluation point too close to a pole of the sample-side functionals."""


class TieError(DomainError):
    """Leading sample eigenvalues are not simple."""


class MissingModel(HDSpectraError, ValueError):
    """The lambda method was requested without a fitted psi model."""


class DataError(HDSpectraError, ValueError):
    """Input data cannot support the requested computation."""


class RankError(DataError):
    """More components requested than the data has numerical rank."""


class DimensionError(DataError):
    """Array shapes are inconsistent."""


class SolverError(HDSpectraError, RuntimeError):
    """An optimization backend reported infeasibility or unboundedness."""


class IterationError(HDSpectraError, RuntimeError):
    """An outer iteration failed to terminate."""


class BudgetError(HDSpectraError, ValueError):
    """The requested problem size exceeds the dense-computation budget."""
