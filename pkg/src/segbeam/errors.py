"""Exception hierarchy shared by all segbeam modules."""


class SegbeamError(Exception):
    """Base class for all errors raised by segbeam."""


class ParameterError(SegbeamError, ValueError):
    """An argument or configuration value is out of its valid range."""


class ShapeError(SegbeamError, ValueError):
    """Array dimensions are inconsistent."""


class DataError(SegbeamError, ValueError):
    """Input data is non-finite, truncated or otherwise unusable."""


class NumericalBreakdown(SegbeamError, ArithmeticError):
    """A recursion reached a state that valid inputs cannot produce."""
