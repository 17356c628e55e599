"""Exception hierarchy shared across the pipeline and the serving layer."""


class AnswerBankError(Exception):
    """Base class for all answerbank errors."""


# --- ingest ---------------------------------------------------------------


class MalformedInput(AnswerBankError):
    """Input file is not valid JSON or violates the interchange schema."""


class InvalidGeometry(MalformedInput):
    """A bounding box is degenerate or non-finite."""


class DuplicateOrder(MalformedInput):
    """Two elements of one document share a reading-order index."""


# --- providers ------------------------------------------------------------


class ProviderUnavailable(AnswerBankError):
    """Provider could not be reached or kept failing after retries."""


class AuthError(ProviderUnavailable):
    """Provider rejected the configured credentials."""


class ResponseTooLong(AnswerBankError):
    """Completion was cut off by the max_tokens limit."""


class DimMismatch(AnswerBankError):
    """Embedding dimensions are inconsistent."""


class ZeroVector(AnswerBankError):
    """Cannot normalize a zero-length vector."""


# --- enrichment / generation ---------------------------------------------


class EmptyDescription(AnswerBankError):
    """Description provider returned a blank response."""


class EmptyDocument(AnswerBankError):
    """Document has no elements to chunk."""


class Unparseable(AnswerBankError):
    """Provider output did not match the expected format."""


# --- index / routing ------------------------------------------------------


class EmptyIndex(AnswerBankError):
    """Search requested against an index with no entries."""


class CorruptIndex(AnswerBankError):
    """Index file failed checksum or structural validation."""


class FingerprintMismatch(AnswerBankError):
    """Index was built with a different embedding provider/config."""


class ContextResolutionError(AnswerBankError):
    """A node id referenced by the index is missing from the chunk store."""


# --- workspace / CLI ------------------------------------------------------


class MissingArtifact(AnswerBankError):
    """A pipeline stage requires an artifact that has not been built yet."""

    def __init__(self, message: str, needed_command: str | None = None):
        super().__init__(message)
        self.needed_command = needed_command


class ConfigHashMismatch(AnswerBankError):
    """Upstream artifact was built under a different configuration."""
