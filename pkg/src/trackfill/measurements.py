"""Per-track and per-track-measure measurements and their quantized bins.

Every function here is a pure function of a sequence of track-measure cells
(see `score.TrackMeasure`). Measurements that are undefined on their input
(e.g. vertical density with no onsets) raise `UndefinedMeasurementError` so
callers can decide whether to omit the corresponding control.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import UndefinedMeasurementError
from .score import TrackMeasure

HORIZONTAL_DENSITY = "horizontal_density"
RHYTHMIC_INTEREST = "rhythmic_interest"
VERTICAL_DENSITY = "vertical_density"
PITCH_CLASSES_PER_ONSET = "pitch_classes_per_onset"
STEP_PROPENSITY = "step_propensity"
LEAP_PROPENSITY = "leap_propensity"

MEASUREMENT_KINDS = (
    HORIZONTAL_DENSITY,
    RHYTHMIC_INTEREST,
    VERTICAL_DENSITY,
    PITCH_CLASSES_PER_ONSET,
    STEP_PROPENSITY,
    LEAP_PROPENSITY,
)

# Right-open boundaries, in onsets per tick at 24 ticks per quarter:
# half notes = 1/48, quarter = 1/24, eighth = 1/12, 16th = 1/6,
# 4.5 onsets per quarter = 0.1875.
_HORIZONTAL_BOUNDS = (1 / 48, 1 / 24, 1 / 12, 1 / 6, 0.1875)
_HORIZONTAL_LABELS = (
    "less than half notes",
    "[half notes, quarter notes)",
    "[quarter notes, eighth notes)",
    "[eighth notes, 16th notes)",
    "[16th notes, 4.5 onsets per quarter)",
    ">= 4.5 onsets per quarter",
)

_INTEREST_BOUNDS = (0.14, 0.4)
_INTEREST_LABELS = ("low (< 0.14)", "medium [0.14, 0.4)", "high (>= 0.4)")

_VERTICAL_LABELS = (
    "1 note per onset",
    "(1, 2] notes per onset",
    "(2, 3] notes per onset",
    "(3, 4] notes per onset",
    "> 4 notes per onset",
)
_PCS_LABELS = tuple(label.replace("notes", "pitch classes").replace("note", "pitch class")
                    for label in _VERTICAL_LABELS)

_PROPENSITY_BOUNDS = (0.01, 0.2, 0.4, 0.6, 0.8, 0.99)
_PROPENSITY_LABELS = (
    "[0, 0.01)", "[0.01, 0.2)", "[0.2, 0.4)", "[0.4, 0.6)",
    "[0.6, 0.8)", "[0.8, 0.99)", "[0.99, 1]",
)

BIN_COUNTS = {
    HORIZONTAL_DENSITY: 6,
    RHYTHMIC_INTEREST: 3,
    VERTICAL_DENSITY: 5,
    PITCH_CLASSES_PER_ONSET: 5,
    STEP_PROPENSITY: 7,
    LEAP_PROPENSITY: 7,
}


def quantize_bin(kind: str, value: float) -> int:
    """Bin index for a measurement value. Total and monotone on each kind's range."""
    if kind == HORIZONTAL_DENSITY:
        return bisect_right(_HORIZONTAL_BOUNDS, value)
    if kind == RHYTHMIC_INTEREST:
        return bisect_right(_INTEREST_BOUNDS, value)
    if kind in (VERTICAL_DENSITY, PITCH_CLASSES_PER_ONSET):
        # left-open, right-closed bins: {1}, (1,2], (2,3], (3,4], (4, inf)
        for i, upper in enumerate((1.0, 2.0, 3.0, 4.0)):
            if value <= upper:
                return i
        return 4
    if kind in (STEP_PROPENSITY, LEAP_PROPENSITY):
        return bisect_right(_PROPENSITY_BOUNDS, value)
    raise ValueError(f"unknown measurement kind {kind!r}")


def bin_label(kind: str, bin_index: int) -> str:
    labels = {
        HORIZONTAL_DENSITY: _HORIZONTAL_LABELS,
        RHYTHMIC_INTEREST: _INTEREST_LABELS,
        VERTICAL_DENSITY: _VERTICAL_LABELS,
        PITCH_CLASSES_PER_ONSET: _PCS_LABELS,
        STEP_PROPENSITY: _PROPENSITY_LABELS,
        LEAP_PROPENSITY: _PROPENSITY_LABELS,
    }[kind]
    return labels[bin_index]


@dataclass(frozen=True, slots=True)
class Measurement:
    kind: str
    value: float
    bin: int

    @property
    def label(self) -> str:
        return bin_label(self.kind, self.bin)


def _measurement(kind: str, value: float) -> Measurement:
    return Measurement(kind, value, quantize_bin(kind, value))


@dataclass(frozen=True, slots=True)
class Chord:
    """All notes sharing one onset tick within a track slice."""

    onset: int
    pitches: frozenset[int]

    def __post_init__(self):
        if not self.pitches:
            raise UndefinedMeasurementError("a chord needs at least one pitch")


@dataclass(frozen=True, slots=True)
class PitchRange:
    low: int
    high: int

    def __post_init__(self):
        if self.low > self.high:
            raise ValueError(f"range low {self.low} > high {self.high}")


@dataclass(frozen=True)
class RhythmInfo:
    """Onset/duration skeleton of a cell collection, pitch information removed.

    1D entries are (tick, duration); 2D entries additionally carry the note
    count and distinct-pitch-class count at the tick.
    """

    mode: str  # "1d" | "2d"
    entries: tuple[tuple[int, ...], ...]


def _cell_offsets(cells: Sequence[TrackMeasure]) -> list[int]:
    offsets = [0]
    for cell in cells:
        offsets.append(offsets[-1] + cell.length)
    return offsets


def rhythm_vector(cells: Sequence[TrackMeasure]) -> np.ndarray:
    """Binary onset indicator over every tick of the cells, concatenated."""
    offsets = _cell_offsets(cells)
    v = np.zeros(offsets[-1], dtype=np.int64)
    for cell, base in zip(cells, offsets):
        for n in cell.notes:
            v[base + n.onset] = 1
    return v


def horizontal_density(cells: Sequence[TrackMeasure]) -> Measurement:
    """Fraction of ticks carrying at least one note onset."""
    total = sum(cell.length for cell in cells)
    if total < 1:
        raise UndefinedMeasurementError("horizontal density needs at least one tick")
    onset_ticks = sum(len(cell.onset_ticks()) for cell in cells)
    return _measurement(HORIZONTAL_DENSITY, onset_ticks / total)


def rhythmic_interest_value(v: np.ndarray) -> float:
    """1 minus the normalized peak cyclic self-correlation of the centered vector.

    For a binary vector with m onsets over L ticks, the centered correlation at
    shift s reduces to (A_s - m^2/L) where A_s is the integer autocorrelation,
    so the whole quantity is the exact rational
    1 - max_s |L*A_s - m^2| / (L*m - m^2). A_s comes from an FFT rounded back
    to integers, which is exact for binary input.
    """
    length = int(v.shape[0])
    if length < 2:
        raise UndefinedMeasurementError("rhythmic interest needs at least 2 ticks")
    m = int(v.sum())
    denom = length * m - m * m
    if denom == 0:  # constant vector: maximally uniform
        return 0.0
    spectrum = np.fft.rfft(v.astype(np.float64))
    auto = np.rint(np.fft.irfft(spectrum * np.conj(spectrum), n=length)).astype(np.int64)
    peak = int(np.abs(length * auto[1:] - m * m).max())
    return 1.0 - peak / denom


def rhythmic_interest_bruteforce(v: np.ndarray) -> float:
    """Reference oracle: explicit dot products against every cyclic shift."""
    length = int(v.shape[0])
    if length < 2:
        raise UndefinedMeasurementError("rhythmic interest needs at least 2 ticks")
    centered = v.astype(np.float64) - v.mean()
    norm2 = float(np.dot(centered, centered))
    if norm2 == 0.0:
        return 0.0
    peak = max(abs(float(np.dot(centered, np.roll(centered, s)))) for s in range(1, length))
    return 1.0 - peak / norm2


def rhythmic_interest(cells: Sequence[TrackMeasure]) -> Measurement:
    return _measurement(RHYTHMIC_INTEREST, rhythmic_interest_value(rhythm_vector(cells)))


def _onset_groups(cells: Sequence[TrackMeasure]) -> list[list[int]]:
    """Pitch lists grouped by onset tick, ordered by (cell position, tick)."""
    groups: dict[tuple[int, int], list[int]] = {}
    for pos, cell in enumerate(cells):
        for n in cell.notes:
            groups.setdefault((pos, n.onset), []).append(n.pitch)
    return [groups[key] for key in sorted(groups)]


def vertical_density(cells: Sequence[TrackMeasure]) -> Measurement:
    """Average number of notes per tick containing an onset."""
    groups = _onset_groups(cells)
    if not groups:
        raise UndefinedMeasurementError("vertical density needs at least one onset")
    return _measurement(VERTICAL_DENSITY, sum(len(g) for g in groups) / len(groups))


def pitch_classes_per_onset(cells: Sequence[TrackMeasure]) -> Measurement:
    """Like vertical density, with pitches collapsed to pitch classes."""
    groups = _onset_groups(cells)
    if not groups:
        raise UndefinedMeasurementError("pitch classes per onset needs at least one onset")
    total = sum(len({p % 12 for p in g}) for g in groups)
    return _measurement(PITCH_CLASSES_PER_ONSET, total / len(groups))


def chord_distance(c1: Chord | Iterable[int], c2: Chord | Iterable[int]) -> float:
    """Average over c1's notes of the smallest pitch movement into c2.

    Not symmetric in general.
    """
    p1 = c1.pitches if isinstance(c1, Chord) else frozenset(c1)
    p2 = c2.pitches if isinstance(c2, Chord) else frozenset(c2)
    if not p1 or not p2:
        raise UndefinedMeasurementError("chord distance needs non-empty chords")
    return sum(min(abs(a - b) for b in p2) for a in p1) / len(p1)


def chords(cells: Sequence[TrackMeasure]) -> list[Chord]:
    """Notes grouped by onset tick, in time order across the cells."""
    offsets = _cell_offsets(cells)
    groups: dict[int, set[int]] = {}
    for cell, base in zip(cells, offsets):
        for n in cell.notes:
            groups.setdefault(base + n.onset, set()).add(n.pitch)
    return [Chord(t, frozenset(groups[t])) for t in sorted(groups)]


def step_leap_propensity(cells: Sequence[TrackMeasure]) -> tuple[Measurement, Measurement]:
    """Fractions of consecutive chord transitions that are steps / leaps.

    A transition with chord distance d is a repetition (d = 0), a step
    (0 < d <= 2), or a leap (d > 2); fractions are over the n-1 transitions.
    """
    sequence = chords(cells)
    n = len(sequence)
    if n < 2:
        raise UndefinedMeasurementError("step/leap propensity needs at least 2 chords")
    steps = leaps = 0
    for a, b in zip(sequence, sequence[1:]):
        d = chord_distance(a, b)
        if 0 < d <= 2:
            steps += 1
        elif d > 2:
            leaps += 1
    return (
        _measurement(STEP_PROPENSITY, steps / (n - 1)),
        _measurement(LEAP_PROPENSITY, leaps / (n - 1)),
    )


def chromagram(cell: TrackMeasure) -> frozenset[tuple[int, int]]:
    """Set of (pitch class, onset tick within the measure) pairs; octave-invariant."""
    return frozenset((n.pitch % 12, n.onset) for n in cell.notes)


def dnoc_flags(slice_) -> list[list[bool]]:
    """Per-cell grid: True where a non-empty cell's chromagram differs from every
    other non-empty cell in the same measure. Empty cells are always False."""
    flags = [[False] * slice_.num_measures for _ in range(slice_.num_tracks)]
    for m in range(slice_.num_measures):
        col = [(t, chromagram(slice_.cell(t, m)))
               for t in range(slice_.num_tracks) if not slice_.cell(t, m).is_empty]
        for t, chroma in col:
            flags[t][m] = all(chroma != other for u, other in col if u != t)
    return flags


def pitch_range(cells: Sequence[TrackMeasure]) -> PitchRange:
    pitches = [n.pitch for cell in cells for n in cell.notes]
    if not pitches:
        raise UndefinedMeasurementError("pitch range needs at least one note")
    return PitchRange(min(pitches), max(pitches))


def rhythm_info(cells: Sequence[TrackMeasure], mode: str) -> RhythmInfo:
    """Flatten all notes to one pitch: onsets with their longest duration, plus
    note/pitch-class counts per onset in 2D mode."""
    if mode not in ("1d", "2d"):
        raise ValueError(f"rhythm info mode must be '1d' or '2d', got {mode!r}")
    offsets = _cell_offsets(cells)
    per_tick: dict[int, list[int]] = {}
    durations: dict[int, int] = {}
    for cell, base in zip(cells, offsets):
        for n in cell.notes:
            tick = base + n.onset
            per_tick.setdefault(tick, []).append(n.pitch)
            durations[tick] = max(durations.get(tick, 0), n.duration)
    entries = []
    for tick in sorted(per_tick):
        if mode == "1d":
            entries.append((tick, durations[tick]))
        else:
            pitches = per_tick[tick]
            entries.append((tick, durations[tick], len(pitches),
                            len({p % 12 for p in pitches})))
    return RhythmInfo(mode, tuple(entries))
