"""Exception hierarchy shared by all modules."""


class CoagFragError(Exception):
    """Base class for package errors."""


class DomainError(CoagFragError, ValueError):
    """Parameters outside the admissible domain of a kernel family or config field."""


class InvalidRatio(DomainError):
    """A fragment-ratio tuple is not an element of the admissible set."""


class NotSorted(InvalidRatio):
    pass


class MassGain(InvalidRatio):
    pass


class UnitFirstRatio(InvalidRatio):
    pass


class IndexOutOfRange(CoagFragError, IndexError):
    pass


class IndexOrder(CoagFragError, ValueError):
    pass


class RateOverflow(CoagFragError, ArithmeticError):
    """Total jump rate is not finite."""


class EventBudgetExceeded(CoagFragError):
    """Raised on demand when a run stopped at its event budget."""


class GridOverflow(CoagFragError):
    pass


class StabilityViolation(CoagFragError):
    def __init__(self, message, suggested_dt=None):
        super().__init__(message)
        self.suggested_dt = suggested_dt


class NoConvergence(CoagFragError):
    def __init__(self, message, last_gap=None, partial=None):
        super().__init__(message)
        self.last_gap = last_gap
        self.partial = partial
