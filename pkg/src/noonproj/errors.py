"""Exception types raised across the package."""


class InvalidArgument(ValueError):
    """An argument violates an operation's precondition."""


class FitFailure(RuntimeError):
    """Least-squares dip fit did not converge; ``last`` holds the final iterate."""

    def __init__(self, message, last=None):
        super().__init__(message)
        self.last = last


class IllPosedFit(ValueError):
    """Dip fit is degenerate, e.g. two dip centers closer than w/10."""


class InsufficientWings(ValueError):
    """Too few scan points outside the dip region to form a wings estimate."""


class UnstableEstimate(RuntimeError):
    """Monte Carlo estimate too noisy to report; ``stderr`` carries its standard error."""

    def __init__(self, message, value=None, stderr=None):
        super().__init__(message)
        self.value = value
        self.stderr = stderr
