"""Exception hierarchy shared by all renoise modules."""


class RenoiseError(Exception):
    """Base class for all package errors."""


class NonFiniteSample(RenoiseError):
    """A sampler returned NaN or infinity while fitting a series."""


class DomainEscape(RenoiseError):
    """An evaluation point left the domain of a function or orbit."""


class RangeEscape(RenoiseError):
    """A composition would evaluate the outer function outside its domain."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class NotRenormalizable(RenoiseError):
    """The map violates the admissibility inequalities for renormalization."""

    def __init__(self, message, failed=None):
        super().__init__(message)
        self.failed = failed


class NewtonDiverged(RenoiseError):
    """Fixed-point Newton iteration stopped making progress."""


class SingularJacobian(RenoiseError):
    """Finite-difference Jacobian was numerically singular."""


class CrossCheckFailed(RenoiseError):
    """Two independent computations of the same quantity disagree."""


class NonMonotone(RenoiseError):
    """A circle lift failed the strict monotonicity check."""


class BracketLost(RenoiseError):
    """Bisection lost its sign-change bracket."""


class PositivityViolated(RenoiseError):
    """An operator weight that must be positive was not."""

    def __init__(self, message, node=None, value=None):
        super().__init__(message)
        self.node = node
        self.value = value


class NotConverged(RenoiseError):
    """Power iteration did not converge within the iteration budget."""

    def __init__(self, message, iters=None):
        super().__init__(message)
        self.iters = iters


class NegativeEigenfunction(RenoiseError):
    """Dominant eigenfunction has negative node values (discretization too coarse)."""


class ReconstructionMismatch(RenoiseError):
    """Block decomposition failed to reproduce the direct functional value."""

    def __init__(self, message, direct=None, blocks=None):
        super().__init__(message)
        self.direct = direct
        self.blocks = blocks


class AllSamplesGuarded(RenoiseError):
    """The interval guard excluded essentially every Monte Carlo sample."""


class DegenerateVariance(RenoiseError):
    """Variance of the linearized noise vanished; normalization impossible."""


class MissingRho(RenoiseError):
    """A sigma schedule needs spectral radii that were not supplied."""


class MissingManifest(RenoiseError):
    """A report was requested for a run directory without manifest.json."""
