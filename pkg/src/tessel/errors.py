"""Exception hierarchy.

Validation problems (bad input, violated preconditions) derive from
:class:`ValidationError`; failures of the numerics themselves derive from
:class:`NumericalError`. The CLI maps the two families to distinct exit codes.
"""


class TesselError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(TesselError, ValueError):
    pass


class DomainError(ValidationError):
    """A point lies outside the domain an operation is defined on."""


class DimensionMismatchError(ValidationError):
    pass


class UnsupportedDimensionError(ValidationError):
    pass


class SizeError(ValidationError):
    pass


class UnsupportedMeasureError(ValidationError):
    pass


class DegenerateDesignError(ValidationError):
    """A design has duplicate rows (or is otherwise unusable for conditioning)."""


class OverlapError(ValidationError):
    """Test and training designs share a point."""


class DegenerateDenominatorError(ValidationError):
    """Responses are constant, so a predictivity coefficient is undefined."""


class NotPositiveDefiniteError(ValidationError):
    """The kernel is only conditionally positive definite."""


class CSVParseError(ValidationError):
    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}: "
        elif where:
            where += " "
        super().__init__(where + message)
        self.path = path
        self.line = line


class NumericalError(TesselError, ArithmeticError):
    pass


class ConditioningError(NumericalError):
    """A symmetric factorization failed even after jitter escalation."""
