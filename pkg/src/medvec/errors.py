"""Exception hierarchy shared across the pipeline."""

from __future__ import annotations


class MedvecError(Exception):
    """Base class for every error raised by this package."""


class DomainError(MedvecError):
    """Errors caused by the data or the environment rather than by usage."""


class UsageError(MedvecError):
    """Bad configuration or arguments."""


class DimensionMismatch(DomainError):
    pass


class DegenerateVector(DomainError):
    pass


class EmptyIndex(DomainError):
    pass


class CorruptSnapshot(DomainError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class EmptyText(DomainError):
    pass


class ProviderUnavailable(DomainError):
    pass


class BatchEmbedError(DomainError):
    def __init__(self, index: int, cause: Exception):
        super().__init__(f"embedding failed for batch element {index}: {cause}")
        self.index = index
        self.cause = cause


class UnknownTemplate(UsageError):
    pass


class EmptyResponse(DomainError):
    pass


class InvalidFraction(UsageError):
    pass


class ManifestMismatch(DomainError):
    def __init__(self, message: str, missing=(), duplicates=(), unknown=()):
        super().__init__(message)
        self.missing = list(missing)
        self.duplicates = list(duplicates)
        self.unknown = list(unknown)


class UnknownLabel(DomainError):
    pass


class EmptyMatrix(DomainError):
    pass


class InvalidPlan(UsageError):
    pass


class MissingData(DomainError):
    def __init__(self, source: str, kind: str):
        super().__init__(f"no {kind} entries for source {source!r}")
        self.source = source
        self.kind = kind


class CorpusFormatError(DomainError):
    pass
