"""Exception hierarchy shared by every module."""


class TypedGamesError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(TypedGamesError, ValueError):
    """Array shapes or dimensions are incompatible."""


class RankDeficientError(TypedGamesError, ValueError):
    def __init__(self, column, message=None):
        self.column = column
        super().__init__(message or f"column {column} is linearly dependent on the preceding columns")


class NotOrthonormalError(TypedGamesError, ValueError):
    def __init__(self, residual, message=None):
        self.residual = residual
        super().__init__(message or f"columns are not orthonormal: ||P^T P - I||_F = {residual:.3e}")


class NotSymmetricError(TypedGamesError, ValueError):
    pass


class NotCommutingError(TypedGamesError):
    def __init__(self, pair, residual):
        self.pair = pair
        self.residual = residual
        super().__init__(
            f"matrices {pair[0]} and {pair[1]} do not commute: "
            f"||A_i A_j - A_j A_i||_F = {residual:.3e}"
        )


class IncompatibleError(TypedGamesError):
    """A shared factorization does not exist or could not be aligned."""


class DegenerateSpectrumError(TypedGamesError):
    pass


class NotPositiveDefiniteError(TypedGamesError, ValueError):
    pass


class SingularMatrixError(TypedGamesError):
    def __init__(self, smallest_singular_value):
        self.smallest_singular_value = smallest_singular_value
        super().__init__(f"matrix is singular: smallest singular value {smallest_singular_value:.3e}")


class InfeasibleError(TypedGamesError, ValueError):
    pass


class LossEvaluationError(TypedGamesError):
    pass


class TensorStructureError(TypedGamesError):
    """A tensor does not have the assumed decomposition."""


class WhiteningError(TypedGamesError):
    pass


class ConfigError(TypedGamesError):
    pass


class DomainError(TypedGamesError, ValueError):
    """A point lies outside the domain of a convex potential."""
