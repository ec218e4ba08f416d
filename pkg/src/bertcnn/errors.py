"""Exception hierarchy shared across the pipeline.

The CLI maps ``ConfigError`` to exit status 1 and every other
``PipelineError`` to exit status 2.
"""


class PipelineError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(PipelineError, ValueError):
    """Invalid configuration or conflicting options."""


class SchemaError(PipelineError, ValueError):
    """A required TSV column is missing."""

    def __init__(self, column, path=None):
        self.column = column
        self.path = path
        where = f" in {path}" if path else ""
        super().__init__(f"missing column {column!r}{where}")


class LabelParseError(PipelineError, ValueError):
    def __init__(self, row, value):
        self.row = row
        self.value = value
        super().__init__(f"row {row}: unknown label {value!r} (expected OFF or NOT)")


class TSVFormatError(PipelineError, ValueError):
    def __init__(self, row, message):
        self.row = row
        super().__init__(f"row {row}: {message}")


class CorpusDecodeError(PipelineError, ValueError):
    def __init__(self, path, offset, reason):
        self.path = path
        self.offset = offset
        super().__init__(f"{path}: invalid UTF-8 at byte offset {offset} ({reason})")


class StratificationError(PipelineError, ValueError):
    pass


class CapacityError(PipelineError, ValueError):
    """Input sequence longer than the encoder's position table."""


class NumericError(PipelineError, ArithmeticError):
    """Non-finite values appeared in a forward or backward pass."""


class CheckpointError(PipelineError):
    """A checkpoint directory is inconsistent with its config descriptor."""


class CheckpointNotFoundError(CheckpointError, FileNotFoundError):
    pass
