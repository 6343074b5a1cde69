"""Exception types raised by the library."""


class FlockFPError(Exception):
    """Base class for every numerical failure raised by flockfp."""


class NonConvergent(FlockFPError):
    pass


class DimensionUnsupported(FlockFPError):
    pass


class DerivativeUnstable(FlockFPError):
    pass


class NoPolarizedState(FlockFPError):
    pass


class BracketNotFound(FlockFPError):
    pass


class RootNotBracketed(FlockFPError):
    pass


class VerificationFailed(FlockFPError):
    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class EigenNotConverged(FlockFPError):
    pass


class AnchorMismatch(FlockFPError):
    pass


class ZeroMeanVelocity(FlockFPError):
    pass


class CFLViolation(FlockFPError):
    pass


class NegativeCell(FlockFPError):
    pass


class DissipationViolation(FlockFPError):
    pass


class NonPositiveValues(FlockFPError):
    pass


class WindowTooShort(FlockFPError):
    pass


class ConfigError(Exception):
    """Malformed or unknown configuration entry (CLI exit code 2)."""


class HypothesisViolated(UserWarning):
    """Initial data does not satisfy the convergence hypotheses; not fatal."""
