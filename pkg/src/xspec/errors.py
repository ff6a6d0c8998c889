"""Exception hierarchy shared by every module.

Input and validation problems raise subclasses of :class:`XspecError`; the
CLI maps those to exit code 1 and anything else to exit code 2.  Parse-time
errors carry a locator (record type plus index or id) so a bad record in a
14k-image file can be found without a debugger.
"""

from __future__ import annotations


class XspecError(Exception):
    """Base class for all validation and domain errors."""


def _located(record_type: str, index: int | str | None, message: str) -> str:
    if index is None:
        return f"{record_type}: {message}"
    return f"{record_type}[{index}]: {message}"


# ---------------------------------------------------------------------------
# geometry

class NonFiniteInput(XspecError):
    """A coordinate or matrix entry is NaN or infinite."""


class TooFewPoints(XspecError):
    """Fewer than the minimum number of correspondences for a fit."""


class DegenerateConfiguration(XspecError):
    """Point configuration cannot determine a homography (e.g. collinear)."""


class PointAtInfinity(XspecError):
    """Projection sent a point to (or too close to) the line at infinity."""


class SingularMatrix(XspecError):
    """Matrix has no usable inverse."""


class EmptyInput(XspecError):
    """An operation that needs at least one element received none."""


class InvalidBox(XspecError):
    """Bounding box with non-positive extent or non-finite fields."""


# ---------------------------------------------------------------------------
# dataset parsing / writing

class LocatedError(XspecError):
    """Error tied to a specific record in a parsed document."""

    def __init__(self, record_type: str, index: int | str | None, message: str):
        super().__init__(_located(record_type, index, message))
        self.record_type = record_type
        self.index = index


class MalformedJson(XspecError):
    """Document is not well-formed JSON or not the expected JSON shape."""


class MissingField(LocatedError):
    """A required field is absent from a record."""

    def __init__(self, record_type: str, index: int | str | None, field: str):
        super().__init__(record_type, index, f"missing required field {field!r}")
        self.field = field


class MalformedField(LocatedError):
    """A field is present but its value is invalid."""


class BrokenReference(LocatedError):
    """A record references an id that does not resolve."""


class DuplicateId(LocatedError):
    """An id (or unique name) appears more than once."""


class InvariantViolation(XspecError):
    """A Dataset handed to the writer violates its structural invariants."""


class AmbiguousImageName(XspecError):
    """A file name used as an image key matches more than one image."""


# ---------------------------------------------------------------------------
# label remapping / splits

class UnmappedLabel(XspecError):
    """Strict remap encountered a category with no map entry."""


class UncoveredImage(XspecError):
    """Split manifest does not cover an image of the dataset."""


class UnknownImage(XspecError):
    """Split manifest references an image absent from the dataset."""


# ---------------------------------------------------------------------------
# transfer

class MissingHomography(XspecError):
    """No homography supplied for a listed image pair."""


class MissingPairImage(XspecError):
    """An image pair references a source image absent from the dataset."""


class UnresolvedSourceImage(XspecError):
    """Pairing file names a source image that is not in the dataset."""


class DuplicatePairId(XspecError):
    """Pairing file contains the same pair_id twice."""


# ---------------------------------------------------------------------------
# evaluation

class UnknownClass(XspecError):
    """Class label absent from the ground-truth category list."""


class NoGroundTruth(XspecError):
    """AP requested for a class with zero ground-truth boxes."""


class AllAbsent(XspecError):
    """mAP requested but every class is absent from the ground truth."""


# ---------------------------------------------------------------------------
# service

class StaleRevision(XspecError):
    """Mutation carried a revision that is no longer current."""

    def __init__(self, pair_id: str, expected: int, got: int):
        super().__init__(
            f"stale revision for pair {pair_id!r}: expected {expected}, got {got}"
        )
        self.pair_id = pair_id
        self.expected = expected
        self.got = got


class UnknownPair(XspecError):
    """Request referenced a pair_id absent from the workspace."""
