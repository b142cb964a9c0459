"""Exception hierarchy shared by all modules."""


class BiotContactError(Exception):
    """Base class for every error raised by the package."""


class InvalidArgument(BiotContactError, ValueError):
    pass


class UnsupportedDegree(InvalidArgument):
    pass


class GeometryError(BiotContactError):
    pass


class InvalidGap(InvalidArgument):
    pass


class AssemblyCorruption(BiotContactError):
    pass


class SolverError(BiotContactError):
    pass


class NoConvergence(SolverError):
    """Active-set iteration hit its cap; ``residuals`` holds the last KKT residuals."""

    def __init__(self, message, residuals=None, iterations=None):
        super().__init__(message)
        self.residuals = residuals
        self.iterations = iterations


class CyclingError(SolverError):
    pass


class PreconditionError(BiotContactError):
    pass


class NothingToMark(BiotContactError):
    pass


class ReferenceTooLarge(BiotContactError):
    pass
