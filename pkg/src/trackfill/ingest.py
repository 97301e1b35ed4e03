"""Grid quantization: raw SMF content onto the 24-ticks-per-quarter grid."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from . import smf
from .errors import UnsupportedTimeSignatureError
from .score import (
    MAX_MEASURE_TICKS,
    MeasureMap,
    Note,
    QuantizedScore,
    TICKS_PER_QUARTER,
    Track,
    VALID_ONSET_PHASES,
)

# Absolute offsets of the valid onsets in the quarter before and after a tick,
# used to snap onto the mixed 32nd + 16th-triplet grid.
_SNAP_CANDIDATES = tuple(
    q * TICKS_PER_QUARTER + phase for q in (-1, 0, 1) for phase in VALID_ONSET_PHASES
)


@dataclass
class IngestDiagnostics:
    """Optional collector for merges, snaps, and rejections during ingest."""

    snapped_onsets: int = 0
    merged_notes: int = 0
    unpaired_note_ons: int = 0
    messages: list[str] = field(default_factory=list)

    def report(self) -> str:
        lines = [
            f"snapped onsets: {self.snapped_onsets}",
            f"merged duplicate notes: {self.merged_notes}",
            f"unpaired note-ons closed: {self.unpaired_note_ons}",
        ]
        lines.extend(self.messages)
        return "\n".join(lines)


def snap_onset(tick: float) -> int:
    """Nearest valid onset position; equidistant ties resolve to the earlier tick."""
    quarter = int(tick // TICKS_PER_QUARTER)
    base = quarter * TICKS_PER_QUARTER
    rel = tick - base
    best = min(_SNAP_CANDIDATES, key=lambda c: (abs(rel - c), c))
    return max(0, base + best)


def quantize(raw: smf.RawScore, diagnostics: IngestDiagnostics | None = None) -> QuantizedScore:
    """Rescale a raw score to 24 ticks per quarter and snap onsets to the grid.

    Durations are rescaled (half-up) and clamped to at least 1 tick. Notes in
    one track that collide on (pitch, onset) after snapping are merged, keeping
    the longer duration. The measure map is built from the file's
    time-signature events (4/4 when there are none); any measure longer than
    8 quarter notes rejects the file.
    """
    scale = TICKS_PER_QUARTER / raw.ppq
    if diagnostics is not None:
        diagnostics.unpaired_note_ons += len(raw.warnings)
        diagnostics.messages.extend(raw.warnings)

    tracks = []
    last_onset = -1
    for rt in raw.tracks:
        merged: dict[tuple[int, int], Note] = {}
        for rn in rt.notes:
            exact = rn.onset * scale
            onset = snap_onset(exact)
            if diagnostics is not None and onset != exact:
                diagnostics.snapped_onsets += 1
            duration = max(1, int(rn.duration * scale + 0.5))
            key = (rn.pitch, onset)
            prev = merged.get(key)
            if prev is not None:
                if diagnostics is not None:
                    diagnostics.merged_notes += 1
                    diagnostics.messages.append(
                        f"merged duplicate pitch {rn.pitch} at tick {onset}"
                    )
                if duration <= prev.duration:
                    continue
            merged[key] = Note(rn.pitch, onset, duration, rt.is_drum, rn.velocity)
        if not merged:
            continue
        notes = tuple(merged.values())
        last_onset = max(last_onset, max(n.onset for n in notes))
        tracks.append(Track(instrument=rt.instrument, name=rt.name, notes=notes))

    signature_events = []
    for tick, num, denom in raw.time_signatures:
        length_ticks = num * 4 * TICKS_PER_QUARTER
        if length_ticks % denom:
            raise UnsupportedTimeSignatureError(
                f"time signature {num}/{denom} is not representable on the tick grid"
            )
        signature_events.append((int(round(tick * scale)), length_ticks // denom, f"{num}/{denom}"))
    measure_map = _build_measure_map(signature_events, last_onset)
    return QuantizedScore(tracks=tuple(tracks), measure_map=measure_map)


def _build_measure_map(events: list[tuple[int, int, str]], last_onset: int) -> MeasureMap:
    events = sorted(events)
    lengths: list[int] = []
    pos = 0
    i = 0
    current = 4 * TICKS_PER_QUARTER
    label = "4/4"
    while not lengths or pos <= last_onset:
        # signature changes inside a measure take effect at the next boundary
        while i < len(events) and events[i][0] <= pos:
            _, current, label = events[i]
            i += 1
        if current < 1:
            raise UnsupportedTimeSignatureError(f"time signature {label} has zero length")
        if current > MAX_MEASURE_TICKS:
            raise UnsupportedTimeSignatureError(
                f"measure {len(lengths)} ({label}, {current} ticks) exceeds the supported "
                f"maximum of {MAX_MEASURE_TICKS} ticks"
            )
        lengths.append(current)
        pos += current
    return MeasureMap(tuple(lengths))


def load_score(source: bytes | str | Path,
               diagnostics: IngestDiagnostics | None = None) -> QuantizedScore:
    """Parse and quantize SMF content from bytes or a file path."""
    data = source if isinstance(source, bytes) else Path(source).read_bytes()
    return quantize(smf.parse_midi(data), diagnostics)
