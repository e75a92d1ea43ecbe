"""Exception hierarchy shared across the package.

The CLI maps ``InvalidInputError`` subclasses to exit code 2 and
``NumericalFailure`` to exit code 3.
"""


class SemisupError(Exception):
    pass


class InvalidInputError(SemisupError, ValueError):
    pass


class InvalidParameterError(InvalidInputError):
    pass


class InvalidDataError(InvalidInputError):
    pass


class InvalidQueryError(InvalidInputError):
    pass


class MissingInputError(InvalidInputError):
    pass


class IdxFormatError(InvalidInputError):
    pass


class IdxLengthError(IdxFormatError):
    pass


class IdxUnsupportedTypeError(IdxFormatError):
    pass


class NumericalFailure(SemisupError, ArithmeticError):
    """Raised when a numerical routine cannot reach its tolerance.

    ``diagnostics`` carries whatever the routine knew when it gave up.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class SingularSystemError(NumericalFailure):
    pass
