"""Exception hierarchy shared across the package.

Exit-code mapping for the CLI: ConfigError -> 2, DataError -> 3,
NumericalError -> 4.
"""


class SohkitError(Exception):
    """Base class for all package errors."""


class ConfigError(SohkitError):
    """Bad run configuration or manifest."""


class DataError(SohkitError):
    """Malformed or inconsistent input data."""


class NumericalError(SohkitError):
    """Numerical failure (factorization, divergence, non-finite values)."""


class SegmentUnavailableError(DataError):
    """A charge-curve segment could not be extracted.

    ``threshold`` names the boundary that was never crossed
    (``"v_low"``, ``"v_high"``, ``"i_high"`` or ``"i_low"``).
    """

    def __init__(self, threshold: str, message: str = ""):
        self.threshold = threshold
        super().__init__(message or f"segment unavailable: {threshold} threshold never crossed")


class DegenerateSeriesError(DataError):
    """A series is constant or too short for the requested statistic."""
