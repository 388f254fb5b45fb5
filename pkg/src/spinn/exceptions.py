"""Exception hierarchy shared by the library and the command-line tool."""


class SpinnError(Exception):
    """Base class for all errors raised by :mod:`spinn`."""


class ShapeError(SpinnError, ValueError):
    """Array or parameter shapes are inconsistent with an architecture."""


class ValidationError(SpinnError, ValueError):
    """Input data or configuration failed validation."""


class NumericError(SpinnError, ArithmeticError):
    """A loss, gradient or objective became non-finite."""


class FitError(SpinnError, RuntimeError):
    """Every restart of a fit (or every cell of a grid) failed."""
