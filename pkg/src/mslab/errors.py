"""Exception hierarchy. The CLI maps these onto exit codes."""


class MsLabError(Exception):
    """Base class for all package errors."""


class PreconditionError(MsLabError, ValueError):
    """An input violates an operation's precondition (CLI exit code 2)."""


class ExpressionError(PreconditionError):
    """Malformed expression or unresolved name in the mini-language."""


class ConvergenceError(MsLabError, RuntimeError):
    """An iterative solver did not converge (CLI exit code 3)."""


class SweepError(MsLabError):
    """A failure inside an epsilon sweep, tagged with the offending epsilon."""

    def __init__(self, epsilon, cause):
        self.epsilon = epsilon
        self.cause = cause
        super().__init__(f"epsilon={epsilon!r}: {cause}")
