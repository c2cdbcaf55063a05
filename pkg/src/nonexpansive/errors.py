"""Exception hierarchy shared by every module of the package."""


class NonexpansiveError(Exception):
    """Base class for all errors raised by this package."""


class UnknownSpace(NonexpansiveError, KeyError):
    pass


class UnknownMap(NonexpansiveError, KeyError):
    pass


class BadParameter(NonexpansiveError, ValueError):
    pass


class SpaceMismatch(NonexpansiveError, ValueError):
    pass


class EmptyInput(NonexpansiveError, ValueError):
    pass


class IncompatibleSpace(NonexpansiveError, ValueError):
    pass


class NotNonexpansive(NonexpansiveError, ValueError):
    """A map failed the construction-time expansion audit."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class AuditInconclusive(NonexpansiveError, RuntimeError):
    """An inner search ran out of budget; this is not a failed audit."""


class BudgetExceeded(NonexpansiveError, RuntimeError):
    pass


class NotFound(NonexpansiveError, LookupError):
    """No recurrence certificate; carries the smallest observed return defect."""

    def __init__(self, message, min_defect=float("inf")):
        super().__init__(message)
        self.min_defect = min_defect


class NotInjective(NonexpansiveError, ValueError):
    def __init__(self, message, pair=None):
        super().__init__(message)
        self.pair = pair


class WrongMonotonicity(NonexpansiveError, ValueError):
    pass


class PreconditionUnmet(NonexpansiveError, ValueError):
    def __init__(self, message, hypothesis=None):
        super().__init__(message)
        self.hypothesis = hypothesis


class CoverFailure(NonexpansiveError, AssertionError):
    """Raised when a finite-horizon cover check finds an uncovered index."""

    def __init__(self, message, uncovered=None):
        super().__init__(message)
        self.uncovered = uncovered


class NoRecurrentAnchor(NonexpansiveError, LookupError):
    pass


class InternalContradiction(NonexpansiveError, AssertionError):
    pass


class OnBoundary(NonexpansiveError, ValueError):
    pass


class BrokenChain(NonexpansiveError, ValueError):
    pass


class UnsupportedSpace(NonexpansiveError, ValueError):
    pass
