"""Exception hierarchy shared by all engine modules.

CLI exit-code mapping: ConfigError -> 2, input/format/data errors -> 3,
numeric failures -> 4.
"""


class EngineError(Exception):
    """Base class for all semclust errors."""


class ConfigError(EngineError):
    """Invalid configuration value or unknown config key."""


class IoError(EngineError):
    """File could not be read or written."""


class FormatError(EngineError):
    """File exists but is not a valid artifact (bad magic, truncation)."""


class DataError(EngineError):
    """Stored or supplied values violate a data invariant (NaN/Inf, norms)."""


class DegenerateRowError(DataError):
    """A row expected to be nonzero has zero L2 norm."""

    def __init__(self, row: int):
        super().__init__(f"row {row} has zero norm")
        self.row = row


class DimensionMismatch(EngineError):
    """Operands have incompatible dimensionality."""


class SizeMismatch(EngineError):
    """Two aligned collections have different lengths."""


class TooFewPoints(EngineError):
    """Requested more clusters than available points."""


class KTooLarge(EngineError):
    """Requested more neighbors than available rows."""


class BudgetTooLarge(EngineError):
    """Per-cluster selection budget exceeds the number of rows."""


class EmptyResult(EngineError):
    """A filter removed every candidate."""


class EmptyColumn(EngineError):
    """A selection column has no selected rows."""


class TooShort(EngineError):
    """A sequence is too short for the requested analysis."""


class NumericError(EngineError):
    """A numeric procedure failed to produce a usable result."""
