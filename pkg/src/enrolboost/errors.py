"""Exception hierarchy.

Each leaf class belongs to one of three families so the CLI can map any
failure to an exit code: configuration (2), data (3), numeric (4).
"""


class EnrolBoostError(Exception):
    exit_code = 1


class ConfigError(EnrolBoostError):
    exit_code = 2


class DataError(EnrolBoostError):
    exit_code = 3


class NumericError(EnrolBoostError):
    exit_code = 4


# --- data ingestion / cohort -------------------------------------------------

class MissingColumn(DataError):
    def __init__(self, column):
        super().__init__(f"missing column {column!r}")
        self.column = column


class UnknownCategoryLevel(DataError):
    def __init__(self, row, column, value=None):
        super().__init__(f"row {row}: unknown level {value!r} in column {column!r}")
        self.row, self.column, self.value = row, column, value


class NonFiniteNumeric(DataError):
    def __init__(self, row, column, value=None):
        super().__init__(f"row {row}: non-finite value {value!r} in column {column!r}")
        self.row, self.column, self.value = row, column, value


class RaggedRow(DataError):
    def __init__(self, row):
        super().__init__(f"row {row}: wrong number of fields")
        self.row = row


class DegenerateSplit(DataError):
    pass


class InsufficientRows(DataError):
    def __init__(self, facet, n=0):
        super().__init__(f"facet {facet!r} has {n} rows, need at least 2")
        self.facet = facet


class InsufficientVariance(DataError):
    def __init__(self, facet):
        super().__init__(f"facet {facet!r}: a score column is constant")
        self.facet = facet


class SchemaMismatch(DataError):
    pass


class InvalidTarget(DataError):
    pass


class UnknownLevel(DataError):
    pass


class TooFewRows(DataError):
    pass


class EmptyFacet(DataError):
    pass


class SingleClass(DataError):
    pass


# --- configuration -----------------------------------------------------------

class InvalidConfig(ConfigError):
    pass


class KTooLarge(ConfigError):
    pass


# --- numeric -----------------------------------------------------------------

class ConstantFeature(NumericError):
    pass


class StageError(EnrolBoostError):
    """Wraps a failure inside one stage of the study pipeline."""

    def __init__(self, stage, cause):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 1)
