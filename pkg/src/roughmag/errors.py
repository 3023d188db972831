"""Exception hierarchy shared by all modules.

Every numerical failure derives from :class:`NumericalError` so the CLI can
map it to a single exit code; configuration problems derive from
:class:`ConfigError`.
"""


class RoughMagError(Exception):
    """Base class for all package errors."""


class NumericalError(RoughMagError, ArithmeticError):
    pass


class SpectrumViolation(NumericalError):
    """Drift matrix has an eigenvalue with non-positive real part."""


class SingularSystem(NumericalError):
    pass


class NonPSD(NumericalError):
    """A covariance matrix has a significantly negative eigenvalue."""


class StepTooLarge(NumericalError):
    pass


class IdentityViolation(NumericalError):
    """An exact algebraic identity failed beyond tolerance (a bug signal)."""


class StepRejected(NumericalError):
    pass


class InsufficientData(NumericalError):
    pass


class GridTooCoarse(RoughMagError, ValueError):
    pass


class GridMismatch(RoughMagError, ValueError):
    pass


class DimensionMismatch(RoughMagError, ValueError):
    pass


class NonZeroScalarPart(RoughMagError, ValueError):
    pass


class TruncationUnsupported(RoughMagError, ValueError):
    pass


class UnsupportedRepresentation(RoughMagError, TypeError):
    pass


class ConfigError(RoughMagError):
    pass


class ParseError(ConfigError):
    pass


class ValidationError(ConfigError):
    def __init__(self, key, message, line=None):
        self.key = key
        self.line = line
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{key}: {message}{where}")
