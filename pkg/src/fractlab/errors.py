"""Exception hierarchy shared by every fractlab module.

The CLI maps these onto exit codes: input/parameter/geometry problems exit
with 2, budget overruns with 3 and numerical non-convergence with 4.
"""


class FractlabError(Exception):
    """Base class for all errors raised by fractlab."""


class InputError(FractlabError, ValueError):
    """Malformed or non-finite input data."""


class ParameterError(FractlabError, ValueError):
    """A parameter is outside the range an operation accepts."""


class EmptyMeasureError(ParameterError):
    """An operation selected a region carrying zero mass."""


class GeometryError(InputError):
    """Invalid Schottky configuration or sample outside the limit set."""


class BudgetError(FractlabError):
    """The requested computation exceeds a size budget."""


class ConvergenceError(FractlabError, ArithmeticError):
    """An iterative numerical method failed to converge or bracket."""


class LemmaPreconditionError(ParameterError):
    """A norm hypothesis needed by an extraction routine fails numerically."""


class BigCountError(FractlabError, OverflowError):
    """An exact integer count does not fit in a signed 64-bit integer."""
