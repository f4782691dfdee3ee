"""Exception types raised across the package."""

from __future__ import annotations


class HoleGLError(Exception):
    """Base class for all package errors."""


class DomainValidationError(HoleGLError, ValueError):
    def __init__(self, message: str, hole: int | None = None):
        super().__init__(message)
        self.hole = hole


class HoleOverlap(DomainValidationError):
    pass


class HoleTooCloseToBoundary(DomainValidationError):
    pass


class NonPositiveRadius(DomainValidationError):
    pass


class ResolutionTooCoarse(HoleGLError, ValueError):
    pass


class LoopBroken(HoleGLError):
    pass


class DomainError(HoleGLError, ValueError):
    """Argument outside the domain of a function."""


class NoConvergence(HoleGLError, RuntimeError):
    def __init__(self, iterations: int, residual: float):
        super().__init__(
            f"no convergence after {iterations} iterations "
            f"(relative residual {residual:.3e})"
        )
        self.iterations = iterations
        self.residual = residual


class GridMismatch(HoleGLError, ValueError):
    pass


class SingularFluxSystem(HoleGLError, RuntimeError):
    def __init__(self, condition: float):
        super().__init__(f"flux constraint system is singular (cond={condition:.3e})")
        self.condition = condition


class BoxTooSmall(HoleGLError, RuntimeError):
    pass


class AtThreshold(HoleGLError, ValueError):
    def __init__(self, hole: int, value: float):
        super().__init__(
            f"hole {hole}: sigma*(1-xi0) = {value:.12g} sits on a half-integer"
        )
        self.hole = hole
        self.value = value


class NonIntegerCirculation(HoleGLError, RuntimeError):
    pass


class ZeroOnLoop(HoleGLError, ValueError):
    pass


class AmbiguousWinding(HoleGLError, ValueError):
    pass


class LineSearchStalled(UserWarning):
    """Issued when no decrease is found even at the smallest step."""


class DegreeMismatch(HoleGLError):
    pass


class BulkVortexFound(HoleGLError):
    pass


class SchemaMismatch(HoleGLError, ValueError):
    pass


class ConfigError(HoleGLError, ValueError):
    pass
