"""Exception types shared across the package."""


class TamdError(Exception):
    """Base class for all package-specific errors."""


class ContractError(TamdError, ValueError):
    """An argument violated a documented precondition."""


class DegenerateCovariance(TamdError):
    """A matrix could not be factored as SPD, even after jitter escalation.

    The offending dense matrix is kept on ``matrix`` for diagnostics.
    """

    def __init__(self, message: str, matrix=None):
        super().__init__(message)
        self.matrix = matrix


class BarrierDomain(TamdError):
    """The transcendental barrier diverged: a pairwise affinity reached 1
    or a mixture weight reached 0."""


class InvalidInit(TamdError):
    """An initializer failed the positive-separation precondition."""


class SpecError(TamdError, ValueError):
    """A data-generating or experiment specification is infeasible."""


class InitError(TamdError):
    """Random initialization could not achieve positive separation."""
