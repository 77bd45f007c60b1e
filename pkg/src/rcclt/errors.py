"""Exception hierarchy shared by all modules.

Exit-code mapping used by the CLI: configuration/usage errors exit 2,
convergence/capacity/range errors exit 3, failed --check runs exit 4.
"""


class RccltError(Exception):
    """Base class for all package errors."""


class ConfigurationError(RccltError):
    """An invalid configuration value; `field` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class UsageError(RccltError):
    """An operation was called with inconsistent or empty inputs."""


class ConvergenceError(RccltError):
    """Iterative solver exhausted its budget; carries the final residual."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(f"{message} (residual={residual:.3e}, iterations={iterations})")
        self.residual = residual
        self.iterations = iterations


class CapacityError(RccltError):
    """Problem size exceeds the exact-linear-algebra budget."""


class SegmentRangeError(RccltError):
    """A one-dimensional walk left the precomputed corrector segment."""

    def __init__(self, half_width: int):
        super().__init__(
            f"walk left the precomputed segment [-{half_width}, {half_width}]; "
            f"retry with a segment of half-width {2 * half_width}"
        )
        self.half_width = half_width


class CheckFailure(RccltError):
    """An acceptance check requested via --check did not hold."""
