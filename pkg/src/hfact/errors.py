"""Exception hierarchy.

``ValidationError`` subclasses signal bad inputs (CLI exit code 2);
``NumericalFailure`` subclasses signal that a computation went wrong
numerically (CLI exit code 3).
"""


class HfactError(Exception):
    pass


class ValidationError(HfactError, ValueError):
    pass


class NumericalFailure(HfactError, ArithmeticError):
    pass


class GridMismatch(ValidationError):
    pass


class GridTooLarge(ValidationError):
    pass


class DegenerateBall(ValidationError):
    pass


class EmptyFamily(ValidationError):
    pass


class IndexOutOfRange(ValidationError, IndexError):
    pass


class SingularPoint(ValidationError):
    pass


class SeparationTooSmall(ValidationError):
    pass


class MeanNotZero(ValidationError):
    pass


class SupportViolation(ValidationError):
    pass


class EmptyScales(ValidationError):
    pass


class BumpOutsideBox(ValidationError):
    pass


class ZeroDenominator(ValidationError, ZeroDivisionError):
    pass


class ConfigError(ValidationError):
    def __init__(self, message, path=None):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}" if path else message)


class NonFiniteResult(NumericalFailure):
    pass


class NormalizerTooSmall(NumericalFailure):
    pass


class DivergingRounds(NumericalFailure):
    """Raised when a factorization round error exceeds its predecessor.

    The partially built result is attached as ``result``.
    """

    def __init__(self, message, result=None):
        self.result = result
        super().__init__(message)
