"""Exception types shared across the package."""


class DomainError(ValueError):
    """Parameter value outside the model's domain."""


class DimensionMismatchError(ValueError):
    """Operands with incompatible Hilbert-space or parameter dimensions."""


class NumericalError(RuntimeError):
    """A numerical precondition failed (rank, positivity, ...)."""


class RankDeficiencyError(NumericalError):
    """State is numerically singular where a nonsingular one is required."""

    def __init__(self, message, eigenvalue=None):
        super().__init__(message)
        self.eigenvalue = eigenvalue


class IrregularModelError(NumericalError):
    """An outcome has vanishing probability but non-vanishing derivative."""


class NonConvergenceError(NumericalError):
    """Optimizer ran out of iterations; carries the best value found."""

    def __init__(self, message, best_value=None, diagnostics=None):
        super().__init__(message)
        self.best_value = best_value
        self.diagnostics = diagnostics or {}


class InfeasibleTaperError(ValueError):
    """Requested prior taper cannot keep mass within the (1+eps) envelope."""


class DivergentIntegralError(NumericalError):
    """A quadrature estimate keeps drifting under refinement."""
