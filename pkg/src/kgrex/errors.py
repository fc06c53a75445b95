"""Exception taxonomy shared across the pipeline.

The CLI maps these to exit codes (see cli.py): validation and configuration
problems exit 2, data-format problems exit 3, anything unexpected exits 4.
"""


class PipelineError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(PipelineError, ValueError):
    """An input violates a documented invariant or precondition."""


class FormatError(PipelineError, ValueError):
    """A file is not in the expected container format (bad magic or version)."""


class CorruptionError(PipelineError, ValueError):
    """A file matches the format but is truncated or internally inconsistent."""


class ParseError(ValidationError):
    """Rule-set text failed to parse; carries 1-based line and column."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class StratificationError(ValidationError):
    """Abnormality-predicate definitions are cyclic."""
