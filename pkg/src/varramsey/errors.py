"""Exception types shared across the package."""


class InvalidArgument(ValueError):
    pass


class DegenerateDistribution(ArithmeticError):
    """The outcome distribution carries no second moment to fit a slope against."""


class InsufficientData(ValueError):
    pass


class NoInformation(ArithmeticError):
    """The measurement does not narrow the prior, so derived clock figures are undefined."""


class UndefinedOrientation(ArithmeticError):
    pass


class ConvergenceFailure(RuntimeError):
    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class EvaluatorFailure(RuntimeError):
    pass
