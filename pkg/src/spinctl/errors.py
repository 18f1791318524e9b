"""Exception types shared across the library."""


class SpinctlError(Exception):
    """Base class for every library-specific error."""


class AmbiguousAxis(SpinctlError):
    """Rotation by pi: the axis cannot be recovered from the quaternion."""


class DomainError(SpinctlError):
    """Argument outside the mathematical domain of a special function."""


class SingularCot(SpinctlError):
    """The rotation-vector ODE entered the guard band of a cotangent pole.

    The pole sits where the accumulated rotation angle hits a nonzero
    multiple of 2*pi; integration refuses rather than guessing a branch.
    """

    def __init__(self, message, t_cross=None):
        super().__init__(message)
        self.t_cross = t_cross


class UnsupportedOrder(SpinctlError):
    """Requested expansion order is not implemented."""


class NonConvergence(SpinctlError):
    """Fixed-point iteration diverged (step changes grew repeatedly)."""

    def __init__(self, message, changes=None):
        super().__init__(message)
        self.changes = list(changes) if changes is not None else None


class NotPSD(SpinctlError):
    """Covariance could not be factorized even with jitter escalation."""

    def __init__(self, message, min_eigenvalue=None):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue


class DegenerateSample(SpinctlError):
    """Too few Monte Carlo samples to form a standard error."""


class AxisRequired(SpinctlError):
    """Target has zero rotation angle but nonzero winding: axis is needed."""


class NoDescent(SpinctlError):
    """The descent loop stalled before reaching the optimality tolerance."""

    def __init__(self, message, last_solution=None):
        super().__init__(message)
        self.last_solution = last_solution


class BCUnreachable(SpinctlError):
    """Penalty escalation exhausted without meeting the boundary triads."""

    def __init__(self, message, last_solution=None):
        super().__init__(message)
        self.last_solution = last_solution


class ConfigError(SpinctlError):
    """Invalid run configuration; carries one diagnostic per violation."""

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(self.diagnostics))
