"""Exception hierarchy shared by the library and the command line."""


class HydroHarvestError(Exception):
    """Base class for all package errors."""


class MalformedInputError(HydroHarvestError, ValueError):
    """Input files or arguments do not satisfy the documented schema."""


class TopologyError(HydroHarvestError):
    """The active graph violates a structural requirement (e.g. exactness conditions)."""


class ConfigurationError(HydroHarvestError, ValueError):
    """Parameters are individually valid but mutually inconsistent."""


class InfeasibleError(HydroHarvestError):
    """An optimization problem or hydraulic state has no feasible point."""

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class NumericalError(HydroHarvestError):
    """The interior-point solver failed to converge to a trustworthy answer."""
