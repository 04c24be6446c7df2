"""Exception hierarchy shared by all mel modules."""


class MelError(Exception):
    """Base class for all library errors."""


class DomainError(MelError):
    """Invalid geometric or parametric input (point outside domain, bad exponent range, ...)."""


class GridMismatch(MelError):
    """Two grid functions living on different grids were combined."""


class EllipticityError(MelError):
    """Coefficient matrix fails the pointwise ellipticity lower bound."""


class UniquenessError(MelError):
    """Sampled nonnegative test functions violate the zero-order uniqueness condition."""


class SolverError(MelError):
    """An inner linear solve failed to reach the requested residual."""


class NoConvergence(MelError):
    """An iterative optimizer or bisection exhausted its budget."""


class BlowUp(MelError):
    """An ODE trajectory exceeded the blow-up cap before reaching the target radius."""

    def __init__(self, r: float, message: str = ""):
        self.r = float(r)
        super().__init__(message or f"trajectory blew up at r={r:.6g}")


class ConfigError(MelError):
    """Malformed experiment configuration."""
