"""Exception types shared across the package."""


class ArgumentError(ValueError):
    """Invalid input (shape, range or precondition violation)."""


class SolverError(RuntimeError):
    """An iterative numerical routine did not reach its target.

    Parameters
    ----------
    message : str
    residual : float, optional
        Best residual or objective achieved before giving up.
    """

    def __init__(self, message, residual=None, **info):
        super().__init__(message)
        self.residual = residual
        self.info = info


class StateError(RuntimeError):
    """A barrier state violated its invariants."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class ReweightFailure(RuntimeError):
    """The reweighting loop stopped before producing a valid output.

    Carries the state at failure so callers can inspect or retry with a
    larger similarity parameter.
    """

    def __init__(self, message, state=None, log=None):
        super().__init__(message)
        self.state = state
        self.log = log or []


class DivergenceError(RuntimeError):
    """Gradient descent blew up; ``trace`` holds the per-iteration record."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or []
