"""In-memory score model on the 24-ticks-per-quarter grid.

A quantized score is a list of tracks plus a measure map. Slicing a score
produces a grid of track-measures, the atomic unit everything downstream
(masking, measurements, token encoding) operates on.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field

from .errors import SliceBoundsError

TICKS_PER_QUARTER = 24

# Onset phases allowed within one quarter note: the union of the 32nd-note
# sub-grid (every 3 ticks) and the 16th-triplet sub-grid (every 4 ticks).
VALID_ONSET_PHASES = (0, 3, 4, 6, 8, 9, 12, 15, 16, 18, 20, 21)
_PHASE_SET = frozenset(VALID_ONSET_PHASES)

# Longest supported measure: 8 quarter notes.
MAX_MEASURE_TICKS = 8 * TICKS_PER_QUARTER

DRUM_INSTRUMENT = 128


def is_valid_onset(tick: int) -> bool:
    """True if an absolute tick is a legal note-onset position."""
    return tick % TICKS_PER_QUARTER in _PHASE_SET


@dataclass(frozen=True, slots=True)
class Note:
    """One note. ``onset`` is in absolute grid ticks unless noted otherwise.

    Velocity is carried through ingest but never consulted by any
    measurement or token.
    """

    pitch: int
    onset: int
    duration: int
    is_drum: bool = False
    velocity: int = 96

    def __post_init__(self):
        if not 0 <= self.pitch <= 127:
            raise ValueError(f"pitch {self.pitch} outside 0..127")
        if self.onset < 0:
            raise ValueError(f"negative onset {self.onset}")
        if self.duration < 1:
            raise ValueError(f"duration {self.duration} < 1")


def _sort_notes(notes) -> tuple[Note, ...]:
    return tuple(sorted(notes, key=lambda n: (n.onset, n.pitch)))


@dataclass(frozen=True)
class Track:
    """An instrument part. ``instrument`` 0..127 is a GM program, 128 is drums."""

    instrument: int
    name: str
    notes: tuple[Note, ...]

    def __post_init__(self):
        if not 0 <= self.instrument <= DRUM_INSTRUMENT:
            raise ValueError(f"instrument {self.instrument} outside 0..128")
        object.__setattr__(self, "notes", _sort_notes(self.notes))

    @property
    def is_drum(self) -> bool:
        return self.instrument == DRUM_INSTRUMENT


@dataclass(frozen=True)
class MeasureMap:
    """Contiguous, non-overlapping measures covering the score from tick 0."""

    lengths: tuple[int, ...]
    starts: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        starts = []
        pos = 0
        for i, length in enumerate(self.lengths):
            if not 1 <= length <= MAX_MEASURE_TICKS:
                raise ValueError(f"measure {i} length {length} outside 1..{MAX_MEASURE_TICKS}")
            starts.append(pos)
            pos += length
        object.__setattr__(self, "starts", tuple(starts))

    def __len__(self) -> int:
        return len(self.lengths)

    def start(self, index: int) -> int:
        return self.starts[index]

    def end(self, index: int) -> int:
        return self.starts[index] + self.lengths[index]

    @property
    def total_ticks(self) -> int:
        return self.starts[-1] + self.lengths[-1] if self.lengths else 0

    def index_of(self, tick: int) -> int:
        """Measure index containing an absolute tick."""
        if not 0 <= tick < self.total_ticks:
            raise SliceBoundsError(f"tick {tick} outside the measure map")
        return bisect.bisect_right(self.starts, tick) - 1


@dataclass(frozen=True)
class QuantizedScore:
    tracks: tuple[Track, ...]
    measure_map: MeasureMap

    @property
    def num_measures(self) -> int:
        return len(self.measure_map)

    def slice(self, start: int, num_measures: int) -> "MeasureSlice":
        return MeasureSlice(self, start, num_measures)

    def note_multiset(self):
        """Multiset of (track, pitch, onset, duration), for conservation checks."""
        out = []
        for t, track in enumerate(self.tracks):
            out.extend((t, n.pitch, n.onset, n.duration) for n in track.notes)
        out.sort()
        return out

    def validate(self) -> None:
        total = self.measure_map.total_ticks
        for t, track in enumerate(self.tracks):
            seen = set()
            for n in track.notes:
                if not is_valid_onset(n.onset):
                    raise ValueError(f"track {t}: onset {n.onset} off-grid")
                if n.onset >= total:
                    raise ValueError(f"track {t}: onset {n.onset} beyond the measure map")
                key = (n.pitch, n.onset)
                if key in seen:
                    raise ValueError(f"track {t}: duplicate (pitch, onset) {key}")
                seen.add(key)


@dataclass(frozen=True)
class TrackMeasure:
    """One cell of the slice grid. Note onsets are relative to the measure start."""

    track_index: int
    measure_index: int
    length: int
    notes: tuple[Note, ...]

    @property
    def is_empty(self) -> bool:
        return not self.notes

    def onset_ticks(self) -> tuple[int, ...]:
        """Distinct onset positions, ascending."""
        return tuple(sorted({n.onset for n in self.notes}))


class MeasureSlice:
    """A contiguous window of measures, addressable as (track, measure) cells."""

    def __init__(self, score: QuantizedScore, start: int, num_measures: int):
        if num_measures < 1 or start < 0 or start + num_measures > score.num_measures:
            raise SliceBoundsError(
                f"slice [{start}, {start + num_measures}) outside score with "
                f"{score.num_measures} measures"
            )
        self.score = score
        self.start = start
        self.num_measures = num_measures
        mm = score.measure_map
        self.measure_lengths: tuple[int, ...] = tuple(
            mm.lengths[start + m] for m in range(num_measures)
        )
        self._cells = [self._build_track_cells(t) for t in range(len(score.tracks))]

    def _build_track_cells(self, t: int) -> list[TrackMeasure]:
        track = self.score.tracks[t]
        onsets = [n.onset for n in track.notes]
        mm = self.score.measure_map
        cells = []
        for m in range(self.num_measures):
            s, e = mm.start(self.start + m), mm.end(self.start + m)
            lo = bisect.bisect_left(onsets, s)
            hi = bisect.bisect_left(onsets, e)
            notes = tuple(
                Note(n.pitch, n.onset - s, n.duration, n.is_drum, n.velocity)
                for n in track.notes[lo:hi]
            )
            cells.append(TrackMeasure(t, m, e - s, notes))
        return cells

    @property
    def num_tracks(self) -> int:
        return len(self._cells)

    def cell(self, track: int, measure: int) -> TrackMeasure:
        if not (0 <= track < self.num_tracks and 0 <= measure < self.num_measures):
            raise SliceBoundsError(f"cell ({track}, {measure}) outside the slice grid")
        return self._cells[track][measure]

    def track_cells(self, track: int, measures=None) -> tuple[TrackMeasure, ...]:
        """Cells of one track, optionally restricted to a set of measure indices."""
        if measures is None:
            return tuple(self._cells[track])
        return tuple(self._cells[track][m] for m in sorted(measures))

    def iter_cells(self):
        for row in self._cells:
            yield from row

    def note_multiset(self):
        """Multiset of (track, pitch, slice-relative onset, duration)."""
        out = []
        offsets = [0]
        for length in self.measure_lengths:
            offsets.append(offsets[-1] + length)
        for cell in self.iter_cells():
            base = offsets[cell.measure_index]
            out.extend(
                (cell.track_index, n.pitch, base + n.onset, n.duration) for n in cell.notes
            )
        out.sort()
        return out
