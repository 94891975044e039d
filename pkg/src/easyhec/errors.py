"""Exception hierarchy shared by all modules."""


class EasyHecError(Exception):
    """Base class for all errors raised by this package."""


class InvalidArgumentError(EasyHecError, ValueError):
    """A caller-supplied value violates a precondition."""


class ParseError(EasyHecError, ValueError):
    """A file could not be parsed; carries the offending line number."""

    def __init__(self, message: str, path: str = "", line: int = 0):
        self.path = path
        self.line = line
        if path or line:
            message = f"{path}:{line}: {message}"
        super().__init__(message)


class ValidationError(EasyHecError, ValueError):
    """Parsed data violates a structural invariant."""


class DimensionMismatchError(InvalidArgumentError):
    """Mask / intrinsics / joint-vector dimensions disagree."""


class BehindCameraError(InvalidArgumentError):
    """A point lies at or behind the camera near plane."""


class DegenerateGeometryError(EasyHecError, ValueError):
    """A geometric configuration admits no unique solution."""


class VisibilityError(EasyHecError, RuntimeError):
    """Too few poses keep the marker (or arm) visible."""


class ExhaustionError(EasyHecError, RuntimeError):
    """Sampling produced no usable candidates."""


class NonConvergenceError(EasyHecError, RuntimeError):
    """An iterative solver failed to converge."""


class NumericalError(EasyHecError, RuntimeError):
    """A non-finite value appeared mid-computation."""


class GenerationError(EasyHecError, RuntimeError):
    """Scenario generation could not satisfy its invariants."""
