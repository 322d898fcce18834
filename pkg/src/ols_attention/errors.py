"""Exception hierarchy shared by every module."""


class ShapeError(ValueError):
    """Operands have incompatible dimensions."""


class NumericalError(ArithmeticError):
    """A numerical routine could not produce a trustworthy result."""


class ConvergenceError(NumericalError):
    """An iterative routine ran out of its iteration budget."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


class RankDeficient(NumericalError):
    """The design matrix is not of full column rank (within tolerance)."""

    def __init__(self, message: str, ratio: float | None = None):
        super().__init__(message)
        self.ratio = ratio


class TrainingDiverged(NumericalError):
    """The optimizer left the region where the model is well defined."""
