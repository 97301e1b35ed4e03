"""Deterministic synthetic MIDI corpus for tests.

Scores are built directly on the 24-tick grid and serialized through the
package's own SMF writer. The mix deliberately includes the situations the
builders must handle: tracks active in all measures, single-pitch ostinato
cells, octave-copy pairs, drum tracks, and occasional empty measures.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from trackfill.score import DRUM_INSTRUMENT, MeasureMap, Note, QuantizedScore, Track
from trackfill.smf import write_smf

MEASURE = 96  # 4/4 at 24 ticks per quarter

RHYTHMS = {
    "whole": (0,),
    "half": (0, 48),
    "quarter": (0, 24, 48, 72),
    "eighth": tuple(range(0, 96, 12)),
    "sixteenth": tuple(range(0, 96, 6)),
    "offbeat": (12, 36, 60, 84),
    "clave": (0, 18, 36, 60, 72),
    "sparse": (0, 66),
}
MAJOR_SCALE = (0, 2, 4, 5, 7, 9, 11)


def _melody_notes(rng, n_measures: int, base: int, *, skip_prob: float = 0.0):
    notes = []
    rhythm_names = rng.choice(list(RHYTHMS), size=2, replace=False)
    degree = int(rng.integers(0, 7))
    for m in range(n_measures):
        if skip_prob and rng.random() < skip_prob:
            continue
        rhythm = RHYTHMS[str(rng.choice(rhythm_names))]
        for tick in rhythm:
            degree = (degree + int(rng.integers(-2, 3))) % (2 * len(MAJOR_SCALE))
            octave, idx = divmod(degree, len(MAJOR_SCALE))
            pitch = base + 12 * octave + MAJOR_SCALE[idx]
            notes.append(Note(int(pitch), m * MEASURE + tick, 12))
    return notes


def _chord_notes(rng, n_measures: int, base: int):
    notes = []
    for m in range(n_measures):
        root = base + MAJOR_SCALE[int(rng.integers(0, 7))]
        for tick in RHYTHMS["half"]:
            for interval in (0, 4, 7):
                notes.append(Note(int(root + interval), m * MEASURE + tick, 48))
    return notes


def _ostinato_notes(rng, n_measures: int, base: int):
    """Single repeated pitch; its cells qualify for auto-credit."""
    pitch = int(base + MAJOR_SCALE[int(rng.integers(0, 7))])
    rhythm = RHYTHMS[str(rng.choice(["quarter", "eighth"]))]
    return [Note(pitch, m * MEASURE + tick, 12)
            for m in range(n_measures) for tick in rhythm]


def _drum_notes(rng, n_measures: int):
    notes = []
    for m in range(n_measures):
        for tick in RHYTHMS["quarter"]:
            notes.append(Note(36 if tick in (0, 48) else 38, m * MEASURE + tick, 6,
                              is_drum=True))
        if rng.random() < 0.5:
            for tick in RHYTHMS["offbeat"]:
                notes.append(Note(42, m * MEASURE + tick, 6, is_drum=True))
    return notes


def make_score(seed: int) -> QuantizedScore:
    rng = np.random.default_rng(seed)
    n_measures = int(rng.integers(8, 18))
    tracks = [Track(int(rng.integers(0, 8)), "lead",
                    tuple(_melody_notes(rng, n_measures, 64)))]
    roles = rng.choice(["chords", "ostinato", "melody", "drums", "octave"],
                       size=int(rng.integers(1, 4)), replace=False)
    for role in roles:
        if role == "chords":
            tracks.append(Track(int(rng.integers(16, 32)), "chords",
                                tuple(_chord_notes(rng, n_measures, 48))))
        elif role == "ostinato":
            tracks.append(Track(int(rng.integers(32, 40)), "ostinato",
                                tuple(_ostinato_notes(rng, n_measures, 36))))
        elif role == "melody":
            tracks.append(Track(int(rng.integers(40, 48)), "counter",
                                tuple(_melody_notes(rng, n_measures, 52,
                                                    skip_prob=0.2))))
        elif role == "drums":
            tracks.append(Track(DRUM_INSTRUMENT, "drums",
                                tuple(_drum_notes(rng, n_measures))))
        else:  # octave copy of the lead, one octave down
            copied = tuple(Note(n.pitch - 12, n.onset, n.duration)
                           for n in tracks[0].notes)
            tracks.append(Track(int(rng.integers(48, 56)), "shadow", copied))
    return QuantizedScore(tracks=tuple(tracks), measure_map=MeasureMap((MEASURE,) * n_measures))


def build_corpus(directory: Path, n_files: int, seed: int = 0) -> list[Path]:
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(n_files):
        score = make_score(seed * 100_003 + i)
        path = directory / f"file_{i:04d}.mid"
        path.write_bytes(write_smf(score))
        paths.append(path)
    return paths
