"""Exception hierarchy shared by every module."""


class ReactMSError(Exception):
    """Base class for package errors."""


class DomainError(ReactMSError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class IntegrationError(ReactMSError, ArithmeticError):
    """A quadrature did not converge or produced a non-finite value."""


class SingularCoefficientError(ReactMSError, ArithmeticError):
    """A transport coefficient is undefined because its integral vanished."""


class EstimateDegenerateError(ReactMSError, ArithmeticError):
    """A Monte Carlo estimate has no admissible samples."""


class ConfigError(ReactMSError, ValueError):
    """A scenario configuration is malformed or violates a constraint."""


class NumericalError(ReactMSError, ArithmeticError):
    """A time integration step could not be completed."""


class StiffnessError(NumericalError):
    """Step halving underflowed; the explicit chemistry update is too stiff."""
