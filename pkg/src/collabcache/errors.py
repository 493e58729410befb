"""Exception types raised across the package."""


class CollabCacheError(Exception):
    """Base class for every error raised by collabcache."""


class DisconnectedTopology(CollabCacheError):
    pass


class SchemaError(CollabCacheError):
    """An instance/demand/stream file does not match the documented schema."""

    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        where = []
        if field is not None:
            where.append(f"field {field!r}")
        if line is not None:
            where.append(f"line {line}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class InvalidStation(CollabCacheError):
    pass


class InvalidContent(CollabCacheError):
    pass


class EnumerationLimitExceeded(CollabCacheError):
    pass


class UncoveredElement(CollabCacheError):
    pass


class NoCover(CollabCacheError):
    pass


class MissingProvenance(CollabCacheError):
    pass


class SizeLimit(CollabCacheError):
    pass


class BudgetViolated(CollabCacheError):
    pass


class DimensionMismatch(CollabCacheError):
    pass


class ZeroBaseline(CollabCacheError):
    pass


class ExperimentError(CollabCacheError):
    """A module error raised inside one run of an experiment."""

    def __init__(self, run_index, cause):
        self.run_index = run_index
        self.cause = cause
        super().__init__(f"run {run_index}: {cause}")
