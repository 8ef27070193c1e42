"""Exception hierarchy shared by all modules."""


class LevyPVError(Exception):
    """Base class for every error raised by the package."""


class ParameterDomainError(LevyPVError, ValueError):
    """A parameter lies outside the domain where the operation is defined."""


class DivergentIntegralError(ParameterDomainError):
    pass


class DivergentSeriesError(ParameterDomainError):
    pass


class InfiniteMomentError(ParameterDomainError):
    pass


class UnsupportedOrderError(ParameterDomainError):
    pass


class SingularKernelError(LevyPVError, ArithmeticError):
    """Kernel derivative evaluated at a point where it blows up."""


class UnsupportedRegimeError(LevyPVError, ValueError):
    pass


class UnsupportedDriverError(LevyPVError, ValueError):
    pass


class DegeneratePathError(LevyPVError, ValueError):
    pass


class EstimationError(LevyPVError, RuntimeError):
    pass


class ConfigError(LevyPVError, ValueError):
    pass


class SizeError(LevyPVError, ValueError):
    pass


class SchemaVersionError(LevyPVError, ValueError):
    pass
