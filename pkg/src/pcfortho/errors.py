"""Exception hierarchy. Every error is a ``ValueError`` so callers can catch broadly."""


class PcfError(ValueError):
    """Base class for all library errors."""


class InvalidDimensionError(PcfError):
    pass


class DomainError(PcfError):
    """Argument outside the domain of a function."""


class CapacityError(PcfError):
    """Basis index beyond the available precomputed roots."""


class MissingIntensityError(PcfError):
    pass


class InvalidIntensityError(PcfError):
    pass


class ConfigurationError(PcfError):
    """Invalid estimator, basis or study configuration."""


class InsufficientSampleError(PcfError):
    pass
