"""Exception types raised across the package."""


class ChachaError(Exception):
    """Base class for all errors raised by this package."""


class MalformedLine(ChachaError, ValueError):
    pass


class MissingTarget(ChachaError, KeyError):
    pass


class NonNumericCell(ChachaError, ValueError):
    pass


class NumericOverflow(ChachaError, ArithmeticError):
    """Learner weights became non-finite despite gradient clipping."""


class EmptyCandidateSet(ChachaError, ValueError):
    pass


class EmptySet(ChachaError, ValueError):
    pass


class InvalidBudget(ChachaError, ValueError):
    pass
