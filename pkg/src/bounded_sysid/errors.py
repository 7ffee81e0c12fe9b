"""Exception hierarchy shared by all modules.

The CLI maps these onto stable exit codes, so new errors should subclass one
of the three families below rather than ``BoundedSysIdError`` directly.
"""


class BoundedSysIdError(Exception):
    """Root of every error raised by this package."""


# -- numerical / model errors (exit code 4) ---------------------------------

class NumericalError(BoundedSysIdError):
    pass


class SingularMatrix(NumericalError):
    pass


class SingularGram(SingularMatrix):
    """Gram matrix of the regressors is singular (insufficient excitation)."""


class DidNotConverge(NumericalError):
    def __init__(self, message, last=None):
        super().__init__(message)
        self.last = last


class NotConverged(NumericalError):
    """Iterative solver hit its iteration cap; ``solution`` holds the last iterate."""

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution


class UnstableSystem(NumericalError):
    pass


class DegenerateInput(NumericalError):
    pass


# -- infeasibility / unboundedness (exit code 5) ----------------------------

class FeasibilityError(BoundedSysIdError):
    pass


class Infeasible(FeasibilityError):
    pass


class Unbounded(FeasibilityError):
    pass


class UnboundedSet(Unbounded):
    """The set-membership polytope is unbounded (data does not excite every direction)."""


# -- bad arguments (exit code 2) --------------------------------------------

class InvalidParam(BoundedSysIdError, ValueError):
    pass


class DimensionMismatch(InvalidParam):
    pass
