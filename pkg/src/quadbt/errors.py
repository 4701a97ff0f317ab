"""Exception types raised by quadbt."""


class QuadbtError(Exception):
    """Base class for all quadbt errors."""


class UnstableSystemError(QuadbtError, ValueError):
    """The system matrix has an eigenvalue with non-negative real part."""


class EigendecompositionError(QuadbtError, RuntimeError):
    """An eigenvalue computation failed to converge."""


class SingularOperatorError(QuadbtError, ValueError):
    """The Lyapunov/Sylvester operator is singular (eigenvalues lam_i + lam_j = 0)."""


class GramianNotDefinedError(QuadbtError, ValueError):
    """The augmented Gramian does not exist for the requested parameters.

    With a zero stabilization parameter the output-state equation of the
    Gramian system reduces to the contradiction 1 = 0, so no solution exists.
    """


class SolverAccuracyError(QuadbtError, RuntimeError):
    """A solver finished but its residual exceeds the required tolerance."""


class AdiIterationError(QuadbtError, RuntimeError):
    """A shifted linear solve inside the ADI iteration failed."""

    def __init__(self, iteration, shift, message):
        super().__init__(f"ADI iteration {iteration} (shift {shift}): {message}")
        self.iteration = iteration
        self.shift = shift


class TruncationOrderError(QuadbtError, ValueError):
    """The requested reduced order cannot be produced from the given factors."""


class StabilizationTooLargeError(QuadbtError, ValueError):
    """The augmented singular value dropped out of the dominant set.

    Raised when sqrt(p''/(2*eps)) fails to exceed the relevant tail singular
    value; choose a smaller stabilization parameter.
    """


class InternalConsistencyError(QuadbtError, RuntimeError):
    """A quantity violated a property guaranteed by construction."""


class StepSizeUnderflowError(QuadbtError, RuntimeError):
    """The adaptive integrator could not meet the tolerance (stiffness)."""

    def __init__(self, t, step):
        super().__init__(
            f"step size underflow at t = {t:.6g} (h = {step:.3e}); "
            "the problem is too stiff for the explicit integrator"
        )
        self.t = t
        self.step = step


class GridMismatchError(QuadbtError, ValueError):
    """Two trajectories do not share the same time grid."""
