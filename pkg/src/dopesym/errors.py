"""Exception hierarchy.

Every error carries the CLI exit code it maps to: validation problems exit
with 2, numerical-accuracy problems with 3.
"""


class DopeError(Exception):
    exit_code = 2


class InvalidArgument(DopeError, ValueError):
    pass


class UnsupportedVariant(DopeError, NotImplementedError):
    pass


class NotANode(DopeError, LookupError):
    pass


class CapacityError(DopeError):
    pass


class InvalidKernel(DopeError, ValueError):
    pass


class SymmetryViolation(DopeError, ValueError):
    pass


class DependencyError(DopeError):
    pass


class RangeError(DopeError, ValueError):
    pass


class NumericalError(DopeError, ArithmeticError):
    exit_code = 3


class PrecisionEscalationError(NumericalError):
    def __init__(self, message, degree=None):
        super().__init__(message)
        self.degree = degree


class SelfCheckError(NumericalError):
    pass


class ConvergenceError(NumericalError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class AccuracyWarning(UserWarning):
    pass
