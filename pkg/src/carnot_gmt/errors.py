"""Exception hierarchy.

Precondition failures map to CLI exit code 2, malformed input to exit code 1.
"""


class CarnotError(Exception):
    """Base class for all package errors."""


class MalformedInputError(CarnotError, ValueError):
    """Input document or parameter does not type-check."""


class StructureError(MalformedInputError):
    """Bracket tensor dimensions are inconsistent with the grading."""


class PreconditionError(CarnotError):
    """A mathematical precondition of an operation is not met."""


class UnsupportedStepError(PreconditionError):
    """Group step exceeds the supported BCH truncation depth."""


class SingularPointError(PreconditionError):
    """Evaluation at a non-smooth point of a gauge."""


class DegenerateLevelSetError(PreconditionError):
    """The gradient of the defining function vanishes."""


class CharacteristicPointError(PreconditionError):
    """A quantity undefined at characteristic points was requested there."""


class NotCharacteristicError(PreconditionError):
    """Graph conditions for the characteristic blow-up are not satisfied."""


class OutOfAtlasError(PreconditionError):
    """Point does not lie in the image of any chart."""


class SupportError(PreconditionError):
    """Test function does not vanish near the atlas boundary."""


class IntegrandError(PreconditionError):
    """Integrand is non-finite on a set of positive measure."""


class UnsupportedDimensionError(PreconditionError):
    """Operation is implemented only for a restricted ambient dimension."""
