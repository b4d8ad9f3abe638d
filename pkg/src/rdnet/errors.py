"""Exception hierarchy.

Validation-type failures derive from :class:`ValidationError` (CLI exit code 1),
numerical failures from :class:`NumericalError` (exit code 2), and malformed
input files raise :class:`ParseError` (exit code 3).
"""


class RDNetError(Exception):
    """Base class for all package errors."""


class ValidationError(RDNetError, ValueError):
    """An input violates a structural invariant."""


class NotDetailedBalanced(ValidationError):
    """Rate constants admit no thermodynamic equilibrium."""


class DomainError(ValidationError):
    """A state has a nonpositive component where a strictly positive one is required."""


class DimensionMismatch(ValidationError):
    pass


class NonManifold(ValidationError):
    pass


class InconsistentOrientation(ValidationError):
    pass


class DegenerateCell(ValidationError):
    pass


class NotWellCentered(ValidationError):
    pass


class NumericalError(RDNetError):
    """A numerical procedure failed to deliver a result."""


class NoConvergence(NumericalError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class StepSizeUnderflow(NumericalError):
    pass


class MaxStepsExceeded(NumericalError):
    pass


class NotConverged(NumericalError):
    def __init__(self, message, status=None, report=None):
        super().__init__(message)
        self.status = status
        self.report = report


class ParseError(RDNetError):
    def __init__(self, message, path=None, line=None, column=None):
        loc = ""
        if path is not None:
            loc = str(path)
            if line is not None:
                loc += f":{line}"
                if column is not None:
                    loc += f":{column}"
            loc += ": "
        super().__init__(loc + message)
        self.path = path
        self.line = line
        self.column = column
