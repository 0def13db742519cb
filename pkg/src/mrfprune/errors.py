"""Exception types shared across the package."""


class MRFError(Exception):
    """Base class for all package errors."""


class InvalidInputError(MRFError, ValueError):
    """Inputs violate an operation's preconditions (shape, range, feasibility)."""


class ConfigError(MRFError, ValueError):
    """A configuration object is inconsistent or incomplete."""


class CapacityError(MRFError):
    """The requested computation exceeds a hard size guard."""


class StateError(MRFError):
    """An object is in the wrong state for the requested operation."""


class TopologyError(MRFError):
    """The graph topology does not support the requested construction."""


class DegenerateTrainingError(MRFError):
    """Training data contains only one class."""


class ParseError(MRFError, ValueError):
    """A file could not be parsed; `location` points at the offending spot."""

    def __init__(self, message, location=None):
        super().__init__(message if location is None else f"{message} (at {location})")
        self.location = location
