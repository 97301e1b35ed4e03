"""Multi-track MIDI infilling toolkit.

Pipeline: SMF bytes -> quantized score -> measure slices -> measurements /
token sequences -> infilling examples (JSONL) -> evaluation and compliance
reports.
"""

from .errors import (
    DecodeError,
    EncodeError,
    MidiParseError,
    SliceBoundsError,
    TokenTextError,
    TrackfillError,
    UndefinedMeasurementError,
    UnsupportedTimeSignatureError,
)
from .ingest import IngestDiagnostics, load_score, quantize, snap_onset
from .score import (
    MeasureMap,
    MeasureSlice,
    Note,
    QuantizedScore,
    Track,
    TrackMeasure,
)
from .smf import parse_midi, write_smf

__all__ = [
    "DecodeError",
    "EncodeError",
    "IngestDiagnostics",
    "MeasureMap",
    "MeasureSlice",
    "MidiParseError",
    "Note",
    "QuantizedScore",
    "SliceBoundsError",
    "TokenTextError",
    "Track",
    "TrackMeasure",
    "TrackfillError",
    "UndefinedMeasurementError",
    "UnsupportedTimeSignatureError",
    "load_score",
    "parse_midi",
    "quantize",
    "snap_onset",
    "write_smf",
]

__version__ = "0.1.0"
