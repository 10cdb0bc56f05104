"""Error taxonomy: input errors exit 1, internal faults exit 2."""


class TierSimError(Exception):
    """Base class for all simulator errors."""


class TraceParseError(TierSimError):
    """Malformed trace input. Carries the offending line number."""

    def __init__(self, message, line_no=None):
        if line_no is not None:
            message = f"{message} at line {line_no}"
        super().__init__(message)
        self.line_no = line_no


class ConfigError(TierSimError):
    """Invalid or inconsistent run configuration."""


class SimulationFault(TierSimError):
    """Internal invariant violation. Always a bug, never an input condition."""
