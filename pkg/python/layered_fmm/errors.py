from typing import Any, Optional, Tuple

Point2 = Tuple[float, float]


class LayeredMediaError(Exception):
    """Base class for every error raised by the layered_fmm package."""
    def __init__(self, message: str):
        self.message = message
        super().__init__(self.message)


class DomainError(LayeredMediaError):
    """
    Raised when an argument is outside the domain of an operation, e.g. a
    Bessel order that is too large or an empty quadrature interval.
    """
    def __init__(self, message: str, parameter: str = "", value: Any = None):
        self.parameter = parameter  # Name of the offending argument
        self.value = value          # The rejected value
        super().__init__(message)


class GeometryError(LayeredMediaError):
    """
    Raised when a source/target placement is not admissible for a kernel,
    for instance a non-positive vertical separation with the "+" source sign.
    """
    def __init__(self, message: str,
                 target: Optional[Point2] = None,
                 source: Optional[Point2] = None):
        self.target = target
        self.source = source
        super().__init__(message)


class NumericalError(LayeredMediaError):
    """
    Raised when a numerical procedure cannot deliver the requested accuracy.
    Carries the best estimate obtained so far so callers can decide whether
    it is good enough.
    """
    def __init__(self, message: str, estimate: Any = None, detail: Any = None):
        self.estimate = estimate  # Best value reached before giving up
        self.detail = detail      # Extra context (lambda, (p, q) entry, ...)
        super().__init__(message)


class FixtureError(LayeredMediaError):
    """Raised when a frozen reference file is missing or malformed."""
    def __init__(self, message: str, path: str = ""):
        self.path = path
        super().__init__(message)
