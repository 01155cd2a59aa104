"""Exception hierarchy shared by all uidc modules."""


class UidcError(Exception):
    """Base class for all errors raised by this package."""


class TraceParseError(UidcError):
    """A trace line is not valid JSON or is structurally malformed."""

    def __init__(self, line_number: int, message: str):
        self.line_number = line_number
        super().__init__(f"line {line_number}: {message}")


class TraceValidationError(UidcError):
    """A parsed record violates a document invariant."""

    def __init__(self, story_id: str, field: str, message: str):
        self.story_id = story_id
        self.field = field
        super().__init__(f"story {story_id!r}, field {field!r}: {message}")


class AlignmentError(UidcError):
    """Token-to-word assignment is inconsistent or impossible."""


class MetricsError(UidcError):
    """A metric is requested on input that does not support it."""


class ContourError(UidcError):
    """Positional or boundary computation has no valid input."""


class StatsError(UidcError):
    """A statistical test received degenerate or invalid input."""


class LmmError(UidcError):
    """Mixed-model input is unusable (singular design, bad grouping)."""


class SynthError(UidcError):
    """Synthetic-corpus specification is invalid."""
