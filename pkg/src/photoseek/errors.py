"""Exception types shared across the package.

Every error raised by photoseek derives from PhotoseekError so callers can
catch one base class. The CLI maps subtrees to exit codes: data problems
(parsing, validation, file formats) exit 3, upstream service problems
(LLM endpoint, remote encoder) exit 4.
"""

from __future__ import annotations


class PhotoseekError(Exception):
    """Base class for all photoseek errors."""


# ---- corpus ----------------------------------------------------------------


class ParseError(PhotoseekError):
    """A JSONL line could not be parsed. Carries the 1-based line number."""

    def __init__(self, message: str, line_no: int | None = None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class ValidationError(PhotoseekError):
    """Loaded data violates a corpus invariant (duplicate id, dangling target, ...)."""


class EmptyVocabularyError(PhotoseekError):
    """No replacement string is available for an object substitution."""


# ---- embedding --------------------------------------------------------------


class StoreMissError(PhotoseekError):
    """A requested key is absent from an embedding store."""


class FormatError(PhotoseekError):
    """A binary store file is corrupt or has the wrong layout."""


class TransportError(PhotoseekError):
    """A remote service could not be reached or returned garbage."""


class ZeroVectorError(PhotoseekError):
    """A vector with zero norm cannot be normalized."""


# ---- descriptor / LLM --------------------------------------------------------


class UnsupportedVariantError(PhotoseekError):
    """The requested descriptor variant is not valid for this operation."""


class LlmTransportError(TransportError):
    """The chat-completion endpoint failed after retries."""


class EmptyCompletionError(PhotoseekError):
    """The LLM returned an empty completion."""


class LlmFormatError(PhotoseekError):
    """The LLM output could not be interpreted."""


class NoJsonObjectError(LlmFormatError):
    """No JSON object could be found in the completion."""


class MissingFieldError(LlmFormatError):
    """A required query key is absent. Carries the key."""

    def __init__(self, key: str, message: str | None = None):
        super().__init__(message or f"missing answer for query {key!r}")
        self.key = key


class EmptyAnswerError(LlmFormatError):
    """A query resolved to an empty answer. Carries the key."""

    def __init__(self, key: str, message: str | None = None):
        super().__init__(message or f"empty answer for query {key!r}")
        self.key = key


# ---- scoring -----------------------------------------------------------------


class DimMismatchError(PhotoseekError):
    """Two vectors or matrices disagree on dimensionality."""


class ShapeMismatchError(PhotoseekError):
    """Score matrices disagree on their dialogue or photo index sets."""


class DegenerateWeightsError(PhotoseekError):
    """Ensemble weights are negative or sum to zero."""


# ---- trainer -----------------------------------------------------------------


class BatchTooSmallError(PhotoseekError):
    """A contrastive batch needs at least two pairs."""


class NonFiniteLossError(PhotoseekError):
    """Training produced a NaN or infinite loss."""


# ---- cli ---------------------------------------------------------------------


class UsageError(PhotoseekError):
    """Bad command line: unknown verb, unknown flag, or missing argument."""
