"""Exception types shared across the package."""


class ClosureLabError(Exception):
    """Base class for all package-specific errors."""


class TntpParseError(ClosureLabError, ValueError):
    """Raised when a TNTP source cannot be parsed.

    Carries the 1-based line number of the offending record when known.
    """

    def __init__(self, message, line_no=None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class NetworkValidationError(ClosureLabError, ValueError):
    """Raised when a network or demand matrix violates a structural invariant."""


class DisconnectedDemandError(ClosureLabError, RuntimeError):
    """Raised when an OD pair with positive demand has no directed path.

    ``pairs`` holds the offending (origin, destination) node ids.
    """

    def __init__(self, pairs):
        self.pairs = list(pairs)
        shown = ", ".join(f"{o}->{d}" for o, d in self.pairs[:8])
        more = "" if len(self.pairs) <= 8 else f" (+{len(self.pairs) - 8} more)"
        super().__init__(f"demand cannot be routed for OD pairs: {shown}{more}")


class SolverError(ClosureLabError, RuntimeError):
    """Raised when the equilibrium solver encounters an invalid state."""


class DatasetError(ClosureLabError, ValueError):
    """Raised for malformed dataset files or fingerprint mismatches."""


class ModelError(ClosureLabError, ValueError):
    """Raised for invalid model specifications or prediction schema mismatches."""


class ConfigError(ClosureLabError, ValueError):
    """Raised when a run configuration file fails schema validation."""
