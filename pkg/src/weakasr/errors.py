"""Exception hierarchy.

``InputError`` subclasses are caller mistakes (bad files, bad config, bad
data) and map to CLI exit code 2. Anything else escaping a command is an
internal error (exit code 1).
"""
from __future__ import annotations


class WeakASRError(Exception):
    """Base class for all toolkit errors."""


class InputError(WeakASRError):
    """Invalid user-supplied input."""


class LexiconError(InputError):
    pass


class LexiconParseError(LexiconError):
    def __init__(self, line: int, detail: str):
        self.line = line
        super().__init__(f"line {line}: {detail}")


class DuplicateKeywordError(LexiconError):
    def __init__(self, surface: str, lines: list[int]):
        self.surface = surface
        self.lines = list(lines)
        super().__init__(f"duplicate keyword {surface!r} on lines {self.lines}")


class UnknownCategoryError(LexiconError):
    def __init__(self, value: str, line: int):
        self.value = value
        self.line = line
        super().__init__(f"line {line}: unknown category {value!r}")


class EmptyReferenceError(InputError):
    def __init__(self, detail: str = "reference is empty after normalization"):
        super().__init__(detail)


class EmptyInputError(InputError):
    pass


class SchemaError(InputError):
    def __init__(self, line: int, detail: str):
        self.line = line
        super().__init__(f"line {line}: {detail}")


class IdCollisionError(InputError):
    def __init__(self, ids: list[str]):
        self.ids = sorted(ids)
        shown = ", ".join(self.ids[:10])
        more = "" if len(self.ids) <= 10 else f" (+{len(self.ids) - 10} more)"
        super().__init__(f"record ids present in both manifests: {shown}{more}")


class MissingAudioError(InputError):
    def __init__(self, ids: list[str]):
        self.ids = list(ids)
        super().__init__(f"audio file missing for records: {', '.join(self.ids)}")


class DurationExceededError(InputError):
    def __init__(self, ids: list[str], limit: float = 30.0):
        self.ids = list(ids)
        self.limit = limit
        super().__init__(f"records longer than {limit:g} s: {', '.join(self.ids)}")


class ConfigError(InputError):
    pass


class EmptyDatasetError(InputError):
    pass


class ExternalSegmenterError(WeakASRError):
    """The external segmenter process failed or broke the line protocol."""


class EndpointError(WeakASRError):
    def __init__(self, detail: str, status: int | None = None, attempt: int = 0):
        self.status = status
        self.attempt = attempt
        super().__init__(f"{detail} (status={status}, attempt={attempt})")


class TransientEndpointError(EndpointError):
    """Retryable failure: timeouts, connection resets, 429 and 5xx responses."""


class EmptyResponseError(EndpointError):
    def __init__(self, detail: str = "text generation returned no usable lines"):
        super().__init__(detail)


class GenerationAborted(WeakASRError):
    pass


class SegmenterAlignmentWarning(UserWarning):
    """External segmenter output did not line up with the base tokens."""


class GenerationWarning(UserWarning):
    """Text generation returned a different number of labels than requested."""
