"""Exception types shared across the package."""


class UnlocalizableError(ValueError):
    """The information matrix is singular or indefinite; position is not identifiable."""


class RelaxationInapplicableError(UnlocalizableError):
    """The worst-case relaxation matrix is not positive definite for some circle."""


class SolverError(RuntimeError):
    """Internal failure of the inner convex solver."""
