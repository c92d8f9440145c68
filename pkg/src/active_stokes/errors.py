"""Exception hierarchy used across the package."""


class ActiveStokesError(Exception):
    """Base class for all package errors."""


class SingularityError(ActiveStokesError, ValueError):
    """A kernel was evaluated (numerically) at its singular point."""


class DomainError(ActiveStokesError, ValueError):
    """An argument lies outside the domain of a formula."""


class AdmissibilityError(ActiveStokesError, ValueError):
    """The force-offset factor beta is not admissible for (c, lambda)."""


class PackingError(ActiveStokesError, RuntimeError):
    """Dart throwing could not place all particles."""


class QuadratureError(ActiveStokesError, RuntimeError):
    """A quadrature did not reach the requested tolerance."""


class CalibrationError(ActiveStokesError, RuntimeError):
    """Far-field calibration of a dipole coefficient failed."""


class ConvergenceError(ActiveStokesError, RuntimeError):
    """An iterative or truncated computation did not converge."""
