"""Exception types raised across the package."""


class DSPError(Exception):
    """Base class for all discount-scheduling errors."""


class InvalidScheme(DSPError, ValueError):
    pass


class InvalidInstance(DSPError, ValueError):
    pass


class InvalidConfig(DSPError, ValueError):
    pass


class DegenerateNormalization(DSPError, ValueError):
    """E(0) - E_min is not positive, so the emission term cannot be normalized."""


class NotInZ(DSPError, ValueError):
    """A discount value is not an exact member of the discount grid."""


class LengthMismatch(DSPError, ValueError):
    pass


class TooLarge(DSPError, ValueError):
    pass


class ZeroAlteredConsumption(DSPError, ValueError):
    pass


class ZeroMutableConsumption(DSPError, ValueError):
    pass


class ZeroChunkMutableConsumption(DSPError, ValueError):
    pass


class IndivisibleChunkSize(DSPError, ValueError):
    pass


class TargetBoundsInfeasible(DSPError, RuntimeError):
    pass


class DegenerateReference(DSPError, ValueError):
    pass


class SubSolverFailure(DSPError, RuntimeError):
    """A chunk sub-solver raised; ``report`` holds the chunks finished so far."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
