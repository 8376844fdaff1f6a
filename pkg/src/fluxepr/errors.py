"""Exception types shared across modules."""


class FluxEPRError(Exception):
    """Base class for package errors."""


class InvalidArgumentError(FluxEPRError, ValueError):
    pass


class SingularGeometryError(FluxEPRError, ValueError):
    """Field point lies on a current-carrying wire."""


class DegenerateModelError(FluxEPRError, ValueError):
    """Rate model has no steady state (e.g. an excited level without decay)."""


class SimulationError(FluxEPRError, RuntimeError):
    pass


class InsufficientDataError(FluxEPRError, ValueError):
    pass


class IdentifiabilityError(FluxEPRError, ValueError):
    """Free parameters cannot be determined from the supplied observations."""
