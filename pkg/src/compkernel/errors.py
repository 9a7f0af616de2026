"""Exception types shared across the package."""


class ConvergenceError(RuntimeError):
    """An iterative solver stopped before reaching its tolerance.

    ``diagnostics`` carries whatever state is useful for debugging, such as
    the last iterate and the number of steps taken.
    """

    def __init__(self, message: str, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


class DegenerateActivationError(ValueError):
    """The activation has no non-constant Hermite component."""


class NotPositiveDefiniteError(ValueError):
    """A Legendre expansion has a coefficient that is genuinely negative."""


class BoundNotApplicableError(ValueError):
    """A closed-form depth bound was requested outside its domain."""
