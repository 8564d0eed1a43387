class QlabError(Exception):
    """Base class for library errors."""


class InvalidInput(QlabError, ValueError):
    pass


class DimensionMismatch(InvalidInput):
    pass


class NotPositiveDefinite(QlabError, ValueError):
    pass


class NumericFailure(QlabError, ArithmeticError):
    pass
