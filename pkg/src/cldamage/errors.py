"""Exception types raised by the solver and the checkers."""


class CLDamageError(Exception):
    """Base class for all package errors."""


class ShapeMismatch(CLDamageError, ValueError):
    pass


class NonZeroMean(CLDamageError, ValueError):
    pass


class NoConvergence(CLDamageError, RuntimeError):
    pass


class ZOutOfRange(CLDamageError, ValueError):
    pass


class InfeasibleState(CLDamageError, ValueError):
    pass


class Infeasible(InfeasibleState):
    """An iterate violates one of the admissible-set constraints.

    ``constraint`` names the violated constraint (``"box"``, ``"mean"`` or
    ``"dirichlet"``).
    """

    def __init__(self, constraint, message):
        super().__init__(f"{constraint}: {message}")
        self.constraint = constraint


class PositiveRate(CLDamageError, ValueError):
    pass


class NotConverged(CLDamageError, RuntimeError):
    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class LineSearchStalled(CLDamageError, RuntimeError):
    pass


class StepFailed(CLDamageError, RuntimeError):
    def __init__(self, step, message, partial=None):
        super().__init__(f"step {step}: {message}")
        self.step = step
        self.partial = partial


class TimeOutOfRange(CLDamageError, ValueError):
    pass


class NegativeInput(CLDamageError, ValueError):
    pass


class ParseError(CLDamageError, ValueError):
    def __init__(self, message, lineno=None):
        loc = f"line {lineno}: " if lineno is not None else ""
        super().__init__(loc + message)
        self.lineno = lineno


class ValidationError(CLDamageError, ValueError):
    pass
