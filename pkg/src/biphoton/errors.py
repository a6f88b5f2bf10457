"""Exception types shared across the package."""


class BiphotonError(Exception):
    """Base class for all package errors."""


class DomainError(BiphotonError, ValueError):
    """Argument outside the validity domain of a model."""


class ResonancePoleError(DomainError):
    """Wavelength inside the guard region of a tube resonance pole."""

    def __init__(self, order, wavelength, message=None):
        self.order = int(order)
        self.wavelength = float(wavelength)
        super().__init__(
            message
            or f"wavelength {self.wavelength:.3f} nm lies on tube resonance m={self.order}"
        )


class BandError(DomainError):
    """A wavelength, window or stencil intersects a resonance band."""

    def __init__(self, message, order=None, leg=None):
        self.order = order
        self.leg = leg
        super().__init__(message)


class NumericalError(BiphotonError, ArithmeticError):
    """Iterative procedure failed to converge."""


class NoRootError(NumericalError):
    """No sign change of the target function inside the bracket."""


class NoPhaseMatchingError(NoRootError):
    """The FWM mismatch has no root inside the signal search window."""


class UndefinedStatisticError(BiphotonError, ValueError):
    """A statistic cannot be formed from the supplied data."""


class ConfigError(BiphotonError, ValueError):
    """Invalid run configuration."""
