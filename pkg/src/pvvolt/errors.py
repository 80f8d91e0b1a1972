"""Exception hierarchy.

Three families map onto CLI exit codes: configuration problems (2), bad or
missing data (3) and numerical failures (4).
"""


class PvVoltError(Exception):
    """Base class for all package errors."""


class ConfigError(PvVoltError, ValueError):
    pass


class DataError(PvVoltError, ValueError):
    pass


class NumericalError(PvVoltError, ArithmeticError):
    pass


# --- data ------------------------------------------------------------------


class ParseError(DataError):
    def __init__(self, message, row=None, column=None):
        self.row = row
        self.column = column
        where = ""
        if row is not None:
            where = f" (row {row}" + (f", column {column})" if column is not None else ")")
        super().__init__(message + where)


class ShapeError(DataError):
    pass


class RangeError(DataError):
    pass


class NonMonotonic(DataError):
    pass


# --- numerics --------------------------------------------------------------


class NonPositiveSquaredVoltage(NumericalError):
    def __init__(self, message, bus=None, day=None, minute=None):
        self.bus = bus
        self.day = day
        self.minute = minute
        super().__init__(message)


class ZeroMatrix(NumericalError):
    pass


class ZeroVector(NumericalError):
    pass


class DomainError(NumericalError, ValueError):
    pass


class DegenerateSample(NumericalError, ValueError):
    pass


class NonPositive(DomainError):
    pass


class NoConvergence(NumericalError):
    pass


class AllZeroPower(NumericalError):
    pass


class EmptyDistribution(NumericalError):
    pass


class EmptyConditioningSet(NumericalError):
    pass


class DivisionNearZero(NumericalError):
    pass


class NonPositiveVoltage(NumericalError, ValueError):
    pass
