"""Exception types shared across the package."""


class DomainError(ValueError):
    """An input violates a mathematical precondition."""


class UndefinedCorrelationError(DomainError):
    """A correlation is requested where one of the vectors has zero variance."""


class RefusalError(RuntimeError):
    """An operation refuses to proceed because the data left after
    exclusions/cleaning is too small to work with."""


class NumericFailureError(RuntimeError):
    """The likelihood became non-finite during estimation."""

    def __init__(self, message, person=None, item=None):
        super().__init__(message)
        self.person = person
        self.item = item
