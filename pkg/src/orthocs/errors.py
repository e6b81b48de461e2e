"""Exception hierarchy shared by the solver and experiment modules."""


class OrthocsError(Exception):
    """Base class for all package-specific failures."""


class NonConvergence(OrthocsError):
    """An iterative solve exhausted its iteration budget."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class InfeasibleNorms(OrthocsError):
    """The per-block norms cannot close a loop (extremizer does not exist)."""


class DegenerateHessian(OrthocsError):
    """Curvature of the closure exponent is not defined (some share >= 1/2)."""


class InvalidProfile(OrthocsError):
    """A density profile left [0, 1] or violated its shape constraints."""


class IllConditioned(OrthocsError):
    """Not enough distinct data points for the requested fit."""


class SolverFailure(OrthocsError):
    """The linear-programming solve did not reach optimality."""
