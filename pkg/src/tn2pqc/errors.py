"""Exception hierarchy shared by all modules."""


class Tn2PqcError(Exception):
    """Base class for library errors."""


class ConfigurationError(Tn2PqcError, ValueError):
    """Invalid configuration or argument values."""


class ShapeError(Tn2PqcError, ValueError):
    """Mismatched lengths, axes or system sizes."""


class ContractionError(ShapeError):
    """Paired axes of a contraction have different lengths."""


class NumericalInputError(Tn2PqcError, ValueError):
    """Input contains NaN or infinite entries."""


class SymmetryError(Tn2PqcError, ValueError):
    """Matrix expected to be hermitian is not."""


class DegeneratePolarError(Tn2PqcError, ArithmeticError):
    """Polar decomposition of a rank-deficient matrix is not unique."""


class NormalizationError(Tn2PqcError, ValueError):
    """State vector is not normalized."""


class UnitarityError(Tn2PqcError, ValueError):
    """Matrix expected to be unitary is not."""


class SizeGuardError(Tn2PqcError, MemoryError):
    """Requested dense object exceeds the supported qubit count."""


class EvaluationError(Tn2PqcError, ArithmeticError):
    """Objective returned a non-finite value."""

    def __init__(self, message, params=None):
        super().__init__(message)
        self.params = params
