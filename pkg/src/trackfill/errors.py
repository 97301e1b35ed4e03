"""Exception types shared across the toolkit."""

from __future__ import annotations


class TrackfillError(Exception):
    """Base class for all toolkit errors."""


class MidiParseError(TrackfillError):
    """Structurally invalid SMF content. Carries the byte offset of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class UnsupportedTimeSignatureError(TrackfillError):
    """A measure exceeds the supported length or is not representable on the grid."""


class SliceBoundsError(TrackfillError, IndexError):
    """Measure-slice indices outside the score."""


class UndefinedMeasurementError(TrackfillError):
    """The measurement is not defined on the given input (e.g. no onsets)."""


class EncodeError(TrackfillError):
    """Mask/control specification cannot be encoded for the given slice."""


class DecodeError(TrackfillError):
    """Out-of-grammar token sequence. Carries the offending token offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (token offset {offset})")
        self.offset = offset


class TokenTextError(TrackfillError):
    """Unparseable token spelling. Carries the whitespace-token index."""

    def __init__(self, message: str, index: int):
        super().__init__(f"{message} (token index {index})")
        self.index = index
