"""Error hierarchy shared across the package.

Validation and parse errors map to CLI exit code 1, stage failures to
exit code 2 (see cli module).
"""


class RarephenError(Exception):
    """Base class for all package errors."""


class ParseError(RarephenError):
    """A source table or record file could not be parsed.

    Carries the 1-based line number when one is known.
    """

    def __init__(self, message: str, *, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        prefix = ""
        if path is not None:
            prefix += str(path)
        if line is not None:
            prefix += f":{line}"
        super().__init__(f"{prefix}: {message}" if prefix else message)


class ValidationError(RarephenError):
    """Input parsed but violates an invariant (duplicate key, bad span, ...)."""


class SpanError(ValidationError):
    """A (start, end) span does not fit its document or disagrees with its surface."""


class WiringError(RarephenError):
    """Inconsistent objects were combined (mention vs. vocabulary, verdict vs. mention)."""


class TransportError(RarephenError):
    """The LLM endpoint could not be reached after all retries."""


class ConflictError(RarephenError):
    """A write lost a first-write-wins race or repeated a one-shot action."""


class StageError(RarephenError):
    """A pipeline stage cannot run: missing upstream outputs or digest mismatch."""

    def __init__(self, stage: str, message: str):
        self.stage = stage
        super().__init__(f"stage '{stage}': {message}")
