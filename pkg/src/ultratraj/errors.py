"""Exception hierarchy shared by every stage."""


class UltraTrajError(Exception):
    """Base class for all package errors."""


class SchemaError(UltraTrajError):
    pass


class IngestError(UltraTrajError):
    """Raised while reading source rows; carries file and 1-based row number when known."""

    def __init__(self, message, source=None, row=None):
        self.source = source
        self.row = row
        where = ""
        if source is not None and row is not None:
            where = f"{source}:{row}: "
        elif source is not None:
            where = f"{source}: "
        elif row is not None:
            where = f"row {row}: "
        super().__init__(where + message)


class ConfigError(UltraTrajError):
    pass


class CalibrationError(UltraTrajError):
    pass


class UndefinedCorrelationError(UltraTrajError):
    pass


class StageError(UltraTrajError):
    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")
