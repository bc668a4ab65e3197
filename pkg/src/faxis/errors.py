"""Exception types shared across the toolkit.

Every error raised on purpose derives from FaxisError so callers can catch
the whole family at an interface boundary (CLI, HTTP service) and map it to
an exit code or status code.
"""

from __future__ import annotations


class FaxisError(Exception):
    """Base class for all toolkit errors."""


class ZeroVector(FaxisError):
    """A vector with (near-)zero norm was given where a direction is required."""


class SchemaMismatch(FaxisError):
    """Two embeddings or an embedding and an index disagree on the axis schema."""


class UnknownAxis(FaxisError):
    """An axis name does not exist in the schema."""


class DimMismatch(FaxisError):
    """A vector or matrix has the wrong dimensionality for its slot."""


class DuplicateId(FaxisError):
    """An item id occurs more than once where uniqueness is required."""


class UnknownId(FaxisError):
    """An item id is not present in the index."""


class ExcludedTarget(FaxisError):
    """The rank-of target was removed by the exclusion set or filter."""


class EmptyIndex(FaxisError):
    """An operation that needs at least one indexed item got none."""


class BadMagic(FaxisError):
    """A binary file does not start with the expected magic bytes."""


class TruncatedFile(FaxisError):
    """A binary file's length does not match its declared contents."""


class NonFinite(FaxisError):
    """NaN or infinity encountered where only finite values are allowed."""


class MissingBlob(FaxisError):
    """A manifest entry references a vector blob that does not exist."""


class RefOutOfRange(FaxisError):
    """A manifest entry references a row beyond the end of its blob."""


class NormViolation(FaxisError):
    """Stored embedding slices are not unit-norm within tolerance.

    ``ids`` lists the offending item ids.
    """

    def __init__(self, message: str, ids: list[str]):
        super().__init__(message)
        self.ids = list(ids)


class ConfigInvalid(FaxisError):
    """A configuration object fails its own invariants."""


class BatchTooSmall(FaxisError):
    """A contrastive batch has no negatives and strict mode is on."""


class NoPositives(FaxisError):
    """Every anchor in a supervised-contrastive batch has an empty positive set."""


class NonFiniteLoss(FaxisError):
    """Training produced a NaN/inf loss.  ``step`` is the offending step index."""

    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step


class DegenerateHead(FaxisError):
    """A projection head maps inputs to (near-)zero vectors.

    ``item_id`` names an offending input when one is known.
    """

    def __init__(self, message: str, item_id: str | None = None):
        super().__init__(message)
        self.item_id = item_id


class MissingLabel(FaxisError):
    """An item lacks a label field the evaluation protocol requires."""


class UsageError(FaxisError):
    """Bad command-line arguments (maps to exit code 1)."""
