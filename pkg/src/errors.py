"""Exception hierarchy shared by the generator, the analytics and the CLI."""
from typing import Optional


class CtcError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(CtcError, ValueError):
    """Invalid or missing configuration value."""

    def __init__(self, message: str, key: Optional[str] = None):
        self.key = key
        if key and key not in message:
            message = f"{key}: {message}"
        super().__init__(message)


class DistributionError(CtcError, ValueError):
    """Degree sequence or pmf cannot be used as given."""


class PartitionError(CtcError, ValueError):
    """Block partition could not be built or violates its invariants."""


class Assumption1Violation(PartitionError):
    """A degree value straddles a block boundary in strict mode."""

    def __init__(self, degree: int, boundary: int, community: int = 0):
        self.degree = degree
        self.boundary = boundary
        self.community = community
        super().__init__(
            f"degree {degree} straddles the boundary between blocks {boundary} and {boundary + 1}"
            f" (community {community}); blocks cannot hold equal stub mass"
        )


class WiringError(CtcError, RuntimeError):
    """Stub pools could not be matched. Signals a bug in parity repair."""


class ClosedFormError(CtcError, ValueError):
    """Closed-form quantity undefined for the given inputs."""


class MeasurementError(CtcError, ValueError):
    """Empirical statistic undefined on the given graph."""


class DetectionError(CtcError, ValueError):
    """Community detection or partition scoring failed."""
