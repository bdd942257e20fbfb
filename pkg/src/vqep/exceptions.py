"""Exception and warning classes shared across the package."""


class InfeasibleError(ValueError):
    """Raised when a set that must be nonempty turns out to be empty."""


class InvariantViolation(RuntimeError):
    """A property that holds in exact arithmetic failed numerically.

    Usually points at a bifunction violating its convexity/continuity
    contract or at an inner solve that was not accurate enough.
    """


class LinesearchError(InvariantViolation):
    """The backtracking search did not terminate within ``ell_max`` trials."""


class ConvergenceWarning(UserWarning):
    """An iterative routine stopped at its iteration cap."""
