"""Exception types shared across the package."""


class RevSCIError(Exception):
    pass


class ShapeError(RevSCIError, ValueError):
    """Inconsistent tensor shapes. ``axis`` names the offending axis when known."""

    def __init__(self, message, axis=None):
        super().__init__(message)
        self.axis = axis


class CoverageError(RevSCIError, ValueError):
    """Some pixel is never exposed by any mask, so the measurement cannot be normalized there."""

    def __init__(self, message, pixel=None):
        super().__init__(message)
        self.pixel = pixel


class NumericalError(RevSCIError, ArithmeticError):
    """Non-finite values appeared (NaN loss, blown-up recomputation, divergence)."""

    def __init__(self, message, block=None):
        super().__init__(message)
        self.block = block


class ContainerError(RevSCIError, ValueError):
    """Malformed RVT1 file."""
