"""Exception and warning types raised across the package."""


class RoughwaveError(Exception):
    """Base class for all package errors."""


class InvalidArgument(RoughwaveError, ValueError):
    pass


class NumericalFailure(RoughwaveError, ArithmeticError):
    pass


class EstimationFailure(RoughwaveError):
    pass


class PrecisionFailure(RoughwaveError):
    """Monte Carlo standard error too large relative to the estimate."""


class UnsupportedDimension(RoughwaveError, ValueError):
    pass


class Divergence(RoughwaveError):
    """A solver state left the blow-up guard."""


class DivergenceWarning(RuntimeWarning):
    """Riemann sums along a sewing ladder fail to be Cauchy."""
