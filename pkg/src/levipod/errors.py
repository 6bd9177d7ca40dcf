"""Exception hierarchy shared by all levipod modules."""


class LevipodError(Exception):
    """Base class for every error raised by this package."""


class InvalidGeometry(LevipodError, ValueError):
    pass


class MeshGenFailure(LevipodError):
    pass


class OutOfBounds(LevipodError, ValueError):
    pass


class DegenerateElement(LevipodError):
    pass


class MeshMismatch(LevipodError, ValueError):
    pass


class PointNotLocated(LevipodError):
    pass


class EmptyWindow(LevipodError, ValueError):
    pass


class InconsistentLength(LevipodError, ValueError):
    pass


class ZeroSnapshot(LevipodError, ValueError):
    pass


class InvalidTolerance(LevipodError, ValueError):
    pass


class DimensionMismatch(LevipodError, ValueError):
    pass


class SingularReducedSystem(LevipodError):
    pass


class SolverFailure(LevipodError):
    pass


class GridMismatch(LevipodError, ValueError):
    pass


class ParseError(LevipodError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(LevipodError, ValueError):
    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class NumericalFailure(LevipodError):
    """Raised by the time loop; wraps the failing step index."""

    def __init__(self, step, cause):
        self.step = step
        self.cause = cause
        super().__init__(f"step {step}: {type(cause).__name__}: {cause}")
