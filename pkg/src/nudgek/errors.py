"""Exception hierarchy shared by all nudgek modules."""


class NudgeError(Exception):
    """Base class for every error raised by this package."""


class InvalidDistribution(NudgeError, ValueError):
    pass


class NonStochasticAlpha(InvalidDistribution):
    pass


class NotSubGenerator(InvalidDistribution):
    pass


class DimensionMismatch(NudgeError, ValueError):
    pass


class InvalidScv(InvalidDistribution):
    pass


class InvalidShape(InvalidDistribution):
    pass


class SingularResolvent(NudgeError, ArithmeticError):
    """sI - S is singular, i.e. the transform is evaluated past its pole."""


class UnstableSystem(NudgeError, ValueError):
    pass


class NonFinite(NudgeError, ValueError):
    pass


class ComplexDominantEigenvalue(NudgeError, ArithmeticError):
    pass


class NotConverged(NudgeError, ArithmeticError):
    pass


class SingularMatrix(NudgeError, ArithmeticError):
    pass


class MeanOrderViolation(NudgeError, ValueError):
    pass


class InsufficientBatches(NudgeError, ValueError):
    pass


class GridMismatch(NudgeError, ValueError):
    pass


class ConfigError(NudgeError, ValueError):
    pass
