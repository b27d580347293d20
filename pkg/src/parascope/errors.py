"""Exception types shared across the package.

Every error raised on a contract boundary has a named class here so
callers can catch precisely; plumbing code re-raises OS-level failures
as IoFailure rather than leaking raw OSError.
"""


class ParascopeError(Exception):
    """Base class for all package errors."""


# --- imaging / codecs ---

class MalformedHeader(ParascopeError):
    """Image byte stream does not start with a valid header."""


class TruncatedPayload(ParascopeError):
    """Header declares more pixel data than the stream contains."""


class UnsupportedBitDepth(ParascopeError):
    """Only 8-bit-per-channel RGB images are supported."""


class EmptyCrop(ParascopeError):
    """Crop box has zero area after clamping to the image bounds."""


# --- backends ---

class WrongInputSize(ParascopeError):
    """Backend received an image of the wrong dimensions."""


class BackendUnavailable(ParascopeError):
    """External backend could not be executed."""


class ZeroAreaBox(ParascopeError):
    """IoU is undefined for a degenerate box."""


class EmptySlide(ParascopeError):
    """Pipeline input image is missing or failed to decode."""


# --- datasets ---

class SchemaError(ParascopeError):
    """Annotation XML is missing a required element."""


class UnknownClassName(ParascopeError):
    """Annotation names a class outside RBC/WBC/Platelet."""


class InvertedBox(ParascopeError):
    """Annotation box has xmax <= xmin or ymax <= ymin."""


class EmptyDataset(ParascopeError):
    """Dataset root contains no labeled images."""


class BadFractions(ParascopeError):
    """Split fractions do not sum to 1."""


class PlacementOverflow(ParascopeError):
    """Synthetic generator could not place all requested cells."""


# --- metrics ---

class NoGroundTruth(ParascopeError):
    """A class (or area bucket) has zero ground-truth instances."""


class KeyMismatch(ParascopeError):
    """Prediction dump references an image absent from ground truth."""


class LengthMismatch(ParascopeError):
    """Aligned prediction/label lists differ in length."""


class EmptySet(ParascopeError):
    """Metric requested over zero samples."""


# --- store / sync ---

class StorageFull(ParascopeError):
    """Local store has no space left."""


class IoFailure(ParascopeError):
    """Underlying filesystem operation failed."""


class EndpointUnreachable(ParascopeError):
    """Sync endpoint could not be contacted; batch skipped."""


# --- service ---

class EndOfFrames(ParascopeError):
    """Camera source is exhausted."""


class PortInUse(ParascopeError):
    """Requested service port is already bound."""


class BadConfig(ParascopeError):
    """Configuration file or value is invalid."""
