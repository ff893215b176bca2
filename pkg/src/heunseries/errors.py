"""Exception hierarchy shared by all modules.

Validation problems derive from :class:`InputError` and numerical breakdowns
from :class:`NumericalError`; the CLI maps them to exit codes 2 and 3.
"""


class HeunSeriesError(Exception):
    """Base class for every error raised by the package."""


class InputError(HeunSeriesError, ValueError):
    """Invalid user input (parameters, ranges, shapes)."""


class NumericalError(HeunSeriesError, ArithmeticError):
    """A computation could not reach the requested accuracy."""


# quadrature
class BadRule(InputError):
    pass


class LengthMismatch(InputError):
    pass


class NonConvergence(NumericalError):
    pass


class NonFinite(NumericalError):
    pass


# volterra
class GridMismatch(InputError):
    pass


class SingularSystem(NumericalError):
    pass


# heun
class BadParams(InputError):
    pass


class SingularInitialPoint(InputError):
    pass


class OutsideInterval(InputError):
    pass


class QuadratureFailure(NumericalError):
    pass


# oracle
class OracleFailure(NumericalError):
    pass


class StepUnderflow(OracleFailure):
    """Raised when the step size collapses, typically near a singular point.

    ``reached`` holds the last accepted abscissa.
    """

    def __init__(self, message, reached=None):
        super().__init__(message)
        self.reached = reached


class MaxSteps(OracleFailure):
    def __init__(self, message, reached=None):
        super().__init__(message)
        self.reached = reached


class TooFewSamples(InputError):
    pass


# teukolsky
class ExtremalBlackHole(InputError):
    pass


class ZeroFrequency(InputError):
    pass


class OutsideDomain(InputError):
    pass


class PoleAtZero(InputError):
    pass
