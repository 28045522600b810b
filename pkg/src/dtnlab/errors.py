class DtnLabError(Exception):
    """Base class for numerical failures raised by this package."""


class LinearSolveError(DtnLabError):
    pass


class ConvergenceError(DtnLabError):
    """A nonlinear iteration hit its iteration cap; ``report`` holds the history."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
