"""Exception types raised across the package."""


class MarketError(Exception):
    pass


class DomainError(MarketError, ValueError):
    """A wealth vector lies outside the domain of a utility function."""


class RangeError(MarketError, ValueError):
    """A marginal value lies outside the range of the marginal map."""


class NumericalError(MarketError, RuntimeError):
    """A root search failed to bracket or converge."""


class UnsupportedError(MarketError, NotImplementedError):
    """The requested operation is not available for this utility family."""


class ConservationError(MarketError, RuntimeError):
    """Total wealth drifted away from its constant value."""


class ConfigError(MarketError, ValueError):
    """Malformed experiment configuration."""
