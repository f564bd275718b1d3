"""Exception hierarchy shared by all modules."""


class WidthsError(Exception):
    """Base class for every error raised by the package."""


class InvalidExponentError(WidthsError, ValueError):
    pass


class DimensionMismatchError(WidthsError, ValueError):
    pass


class SolverFailure(WidthsError, RuntimeError):
    """Iterative distance solver hit its iteration cap.

    ``best`` is the smallest objective value found. It comes from a feasible
    point, so it is only an upper bound on the true distance.
    """

    def __init__(self, message, best, residual):
        super().__init__(message)
        self.best = best
        self.residual = residual


class EnsembleError(WidthsError, ValueError):
    pass


class GroupTooLargeError(EnsembleError):
    pass


class InvalidLawError(EnsembleError):
    pass


class DegenerateCoordinateError(WidthsError, ValueError):
    def __init__(self, index):
        super().__init__(f"coordinate {index} has zero q-th moment")
        self.index = index


class UnsupportedStructureError(WidthsError, ValueError):
    pass


class UnsupportedExponentError(WidthsError, ValueError):
    pass


class InvalidPairError(WidthsError, ValueError):
    pass


class IncomparableError(WidthsError, ValueError):
    pass


class ConfigError(WidthsError, ValueError):
    pass
