"""Synthetic training corpora with controlled density/texture/range statistics.

Scores are composed directly as prompt-format token text (the toolkit's
documented wire format) and converted to MIDI through `trackfill detokenize`,
so the trainer never re-implements tokenization. The statistic classes are
chosen to give the control tokens strong, learnable correlates:

- rhythm class per track  -> horizontal density bins 0..4 and groove shapes
- texture class per track -> vertical density / pitch-class bins
- register per track      -> pitch ranges
- walk style per track    -> step vs leap propensity
- octave-copy tracks      -> distinct-chromagram flags both ways
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import toolkit

MEASURE = 96
RHYTHMS = {
    "whole": (0,),
    "half": (0, 48),
    "quarter": (0, 24, 48, 72),
    "offbeat": (12, 36, 60, 84),
    "eighth": tuple(range(0, 96, 12)),
    "sixteenth": tuple(range(0, 96, 6)),
    "clave": (0, 18, 36, 60, 72),
}
REGISTERS = {"low": (38, 54), "mid": (54, 70), "high": (68, 84)}
SCALE = (0, 2, 4, 5, 7, 9, 11)


def _walk_pitches(rng, n: int, register: tuple[int, int], style: str) -> list[int]:
    low, high = register
    pitch = int(rng.integers(low, high + 1))
    out = []
    for _ in range(n):
        if style == "steps":
            move = int(rng.choice([-2, -1, 1, 2]))
        elif style == "leaps":
            move = int(rng.choice([-7, -5, 5, 7, 12, -12]))
        else:  # repeats
            move = 0
        pitch = min(high, max(low, pitch + move))
        out.append(pitch)
    return out


_TEXTURE_INTERVALS = {
    "mono": (0,),
    "octave": (0, 12),
    "double": (0, 7),
    "triad": (0, 4, 7),
    "stack4": (0, 4, 7, 10),
    "stack5": (0, 4, 7, 10, 14),
}


def _texture(pitch: int, texture: str) -> list[int]:
    return [min(127, pitch + i) for i in _TEXTURE_INTERVALS[texture]]


def _track_text(rng, n_measures: int, *, rhythm: str, texture: str,
                register: str, style: str, instrument: int) -> tuple[str, list]:
    onsets = RHYTHMS[rhythm]
    gaps = list(onsets[1:]) + [MEASURE]
    pitches = _walk_pitches(rng, n_measures * len(onsets), REGISTERS[register], style)
    cursor = 0
    measures = []
    cells = []
    for m in range(n_measures):
        parts = [f"<mlen:{MEASURE}>"]
        cell_notes = []
        for i, tick in enumerate(onsets):
            duration = max(3, gaps[i] - tick)
            chord = sorted(set(_texture(pitches[cursor], texture)), reverse=True)
            cursor += 1
            parts.append(f"<pos:{tick}>")
            for p in chord:
                parts.append(f"<non:{p}> <dur:{duration}>")
                cell_notes.append((p, tick, duration))
        measures.append(" ".join(parts))
        cells.append(cell_notes)
    return f"<inst:{instrument}> " + " <msep> ".join(measures), cells


def score_text(seed: int, *, n_measures: int = 8) -> str:
    """Prompt-format token text for one synthetic score."""
    rng = np.random.default_rng(seed)
    n_tracks = 1 if rng.random() < 0.55 else 2
    tracks = []
    first = None
    for t in range(n_tracks):
        if t == 1 and rng.random() < 0.25:
            # octave copy of the first track, one octave down
            text = first[0]
            shifted = []
            for piece in text.split():
                if piece.startswith("<non:"):
                    pitch = max(0, int(piece[5:-1]) - 12)
                    shifted.append(f"<non:{pitch}>")
                elif piece.startswith("<inst:"):
                    shifted.append(f"<inst:{int(rng.integers(0, 48))}>")
                else:
                    shifted.append(piece)
            tracks.append(" ".join(shifted))
            continue
        rhythm = str(rng.choice(list(RHYTHMS)))
        # spread textures over all five vertical-density bins so that no
        # one-bin tolerance window swallows the unconditioned prior
        texture = str(rng.choice(["mono", "octave", "double", "triad",
                                  "stack4", "stack5"],
                                 p=[0.45, 0.08, 0.07, 0.25, 0.10, 0.05]))
        register = str(rng.choice(list(REGISTERS)))
        style = str(rng.choice(["steps", "leaps", "repeats"],
                               p=[0.45, 0.35, 0.2]))
        rendered = _track_text(rng, n_measures, rhythm=rhythm, texture=texture,
                               register=register, style=style,
                               instrument=int(rng.integers(0, 48)))
        if first is None:
            first = rendered
        tracks.append(rendered[0])
    return " ".join(tracks)


def build_corpus(directory: Path, n_files: int, seed: int = 0) -> list[Path]:
    """Write n_files synthetic MIDI files via the toolkit's detokenizer."""
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(n_files):
        text = score_text(seed * 1_000_003 + i)
        text_path = directory / f"synth_{i:04d}.txt"
        text_path.write_text(text + "\n")
        midi_path = directory / f"synth_{i:04d}.mid"
        toolkit.detokenize(text_path, midi_path)
        text_path.unlink()
        paths.append(midi_path)
    return paths
