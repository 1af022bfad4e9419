"""Exception hierarchy shared across the package."""


class DgflError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(DgflError):
    """Malformed or missing dataset file."""


class ConfigError(DgflError):
    """Invalid or infeasible configuration value."""


class RangeError(ConfigError):
    """Config value outside its allowed range."""


class ShapeError(DgflError):
    """Dimension mismatch between arrays or models."""


class NumericError(DgflError):
    """Non-finite value produced during training."""


class StateError(DgflError):
    """Operation invoked on a client in an invalid state."""


class InputError(DgflError):
    """Invalid argument to a numeric routine."""


class TopologyError(DgflError):
    """Peer topology violates a protocol precondition."""
