"""Exception types raised across the package."""


class VnlsError(Exception):
    """Base class for all package errors."""


class GridTooSmall(VnlsError):
    pass


class ExponentOverflow(VnlsError):
    pass


class IntegrationError(VnlsError):
    """Raised by the fixed-step integrators (underflow, non-finite values)."""


class SingularGram(VnlsError):
    """The Gram matrix q^T Q q* is singular: a degenerate dressing point.

    ``locations`` holds the offending (x, t) pairs when known.
    """

    def __init__(self, message, locations=None):
        super().__init__(message)
        self.locations = [] if locations is None else list(locations)


class SingularCauchy(SingularGram):
    pass


class SingularM(VnlsError):
    pass


class DegeneratePoint(VnlsError):
    pass


class NonDecaying(VnlsError):
    pass


class DispersionMismatch(VnlsError):
    pass


class DefectError(VnlsError):
    """Defect requested but not configured, or configured where it is not allowed."""
