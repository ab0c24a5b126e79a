"""Exception types shared across the package.

Input problems derive from :class:`InvalidInput` (CLI exit code 2), solver
divergence is :class:`SolverDiverged` (exit code 3) and everything else that
signals a numerical breakdown derives from :class:`NumericalFailure`
(exit code 4).
"""


class MnarBoostError(Exception):
    """Base class for all package errors."""


class InvalidInput(MnarBoostError, ValueError):
    """Raised when user-supplied data or configuration is unusable.

    ``rows`` holds up to the first ten offending row indices, when the
    problem is row-specific.
    """

    def __init__(self, message, rows=None):
        super().__init__(message)
        self.rows = list(rows) if rows is not None else []


class NonFiniteValue(InvalidInput):
    pass


class MissingYWithR1(InvalidInput):
    pass


class DimensionMismatch(InvalidInput):
    pass


class NoCompleteCases(InvalidInput):
    pass


class TooFewRows(InvalidInput):
    pass


class DegenerateCovariate(InvalidInput):
    pass


class LengthMismatch(InvalidInput):
    pass


class UnsupportedModelPair(InvalidInput):
    pass


class NumericalFailure(MnarBoostError, ArithmeticError):
    pass


class SingularSystem(NumericalFailure):
    pass


class RankDeficientDesign(NumericalFailure):
    pass


class ZeroWeightMass(NumericalFailure):
    pass


class ZeroKernelMass(NumericalFailure):
    pass


class PropensityUnderflow(NumericalFailure):
    pass


class MissingDraws(NumericalFailure):
    pass


class DegenerateDirection(NumericalFailure):
    pass


class SolverDiverged(MnarBoostError, RuntimeError):
    """The estimating-equation solver failed to find a root."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
