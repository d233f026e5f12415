"""Exception hierarchy shared by the toolkit."""


class ImcMapError(Exception):
    """Base class for every error raised by imcmap."""


class GraphError(ImcMapError, ValueError):
    """Malformed or structurally invalid model graph."""


class ConfigError(ImcMapError, ValueError):
    """Invalid run or sweep configuration."""


class InfeasibleMappingError(ImcMapError):
    """A mapping cannot be produced or executed on the given PU pool."""


class NonConvergenceError(ImcMapError):
    """The simulated pipeline did not settle into a periodic steady state."""
