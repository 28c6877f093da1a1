"""
Exception hierarchy for kinspec.

Every class carries the exit code the command line maps it to:
- ConfigError (2): unreadable or invalid experiment configuration
- PreconditionError (3): inputs outside a routine's documented range
- DivergenceError (4): iterations or branch tracking that ran away
- ToleranceError (5): a computed value missed its declared tolerance
"""


class KinspecError(Exception):
    """Base class for all kinspec failures."""

    exit_code = 1


class ConfigError(KinspecError):
    """Configuration text could not be read or validated."""

    exit_code = 2

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class PreconditionError(KinspecError, ValueError):
    """Arguments violate a documented precondition."""

    exit_code = 3


class SingularPointError(PreconditionError):
    """Kernel evaluated at coincident points where it is singular."""


class ResolutionError(PreconditionError):
    """Grid or quadrature too coarse for the requested accuracy."""

    def __init__(self, message: str, measured: float | None = None):
        self.measured = measured
        super().__init__(message)


class ClusterGapError(PreconditionError):
    """The near-zero eigenvalue cluster of L is not cleanly separated."""

    def __init__(self, message: str, gap_ratio: float, cluster_size: int):
        self.gap_ratio = gap_ratio
        self.cluster_size = cluster_size
        super().__init__(message)


class DivergenceError(KinspecError):
    """A time stepper or iteration left its admissible region."""

    exit_code = 4

    def __init__(self, message: str, time: float | None = None):
        self.time = time
        super().__init__(message)


class NonContractionError(DivergenceError):
    """Picard iterates stopped contracting."""

    def __init__(self, message: str, lipschitz: float, time: float | None = None):
        self.lipschitz = lipschitz
        super().__init__(message, time=time)


class BranchTrackingError(DivergenceError):
    """Eigenvector continuity was lost while following a dispersion branch."""

    def __init__(self, message: str, r: float, overlap: float):
        self.r = r
        self.overlap = overlap
        super().__init__(message)


class ToleranceError(KinspecError):
    """A certification or convergence check failed."""

    exit_code = 5


class QuadratureError(ToleranceError):
    """Successive quadrature refinements disagree."""

    def __init__(self, message: str, coarse: float, refined: float):
        self.coarse = coarse
        self.refined = refined
        super().__init__(f"{message} (coarse={coarse:.17g}, refined={refined:.17g})")


class ConditioningError(ToleranceError):
    """A linear system or least-squares fit is too ill-conditioned."""

    def __init__(self, message: str, estimate: float):
        self.estimate = estimate
        super().__init__(f"{message} (condition estimate {estimate:.3e})")


class MultiplicityError(ToleranceError):
    """Eigenvalues collided where a simple spectrum is required."""


class CacheFormatError(KinspecError):
    """A cache or restart file does not match the binary layout."""
