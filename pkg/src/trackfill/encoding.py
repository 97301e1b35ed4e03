"""Bidirectional mapping between measure slices and (prompt, target) sequences.

Prompt layout, per track: instrument token, then measure blocks separated by
measure separators. Each block is a measure-length token followed by either
the cell's note tokens or, for masked cells, a mask token, that cell's
control tokens, and any requested masked-pitch conditioning. Per-track
control blocks (track-ref token plus controls) follow the last track.

Control values are computed from masked content only, so nothing outside the
masked cells can influence the controls in the prompt.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from . import measurements as meas
from . import tokens as tk
from .errors import DecodeError, EncodeError
from .score import MeasureMap, MeasureSlice, Note, QuantizedScore, Track, TrackMeasure
from .tokens import Tok

COND_1D = "1d"
COND_2D = "2d"

TRACK_CONTROL_FAMILIES = (
    "horiz", "interest", "vert", "pcs", "step", "leap", "range_strict", "range_loose",
)
CELL_CONTROL_FAMILIES = ("horiz", "vert", "pcs", "dnoc", "range_strict")


@dataclass(frozen=True)
class MaskSpec:
    """Which cells to mask, with optional per-cell rhythmic conditioning.

    Mask indices are assigned in row-major (track, then measure) order.
    """

    cells: tuple[tuple[int, int], ...]
    conditioning: Mapping[tuple[int, int], str] = field(default_factory=dict)

    @classmethod
    def build(cls, cells: Iterable[tuple[int, int]],
              conditioning: Mapping[tuple[int, int], str] | None = None) -> "MaskSpec":
        ordered = tuple(sorted(set((int(t), int(m)) for t, m in cells)))
        conditioning = dict(conditioning or {})
        for cell, mode in conditioning.items():
            if mode not in (COND_1D, COND_2D):
                raise ValueError(f"conditioning mode {mode!r} for cell {cell}")
            if tuple(cell) not in ordered:
                raise ValueError(f"conditioning for unmasked cell {cell}")
        return cls(ordered, conditioning)

    def __len__(self) -> int:
        return len(self.cells)

    def index_of(self, cell: tuple[int, int]) -> int:
        return self.cells.index(cell)


@dataclass(frozen=True)
class ControlSpec:
    """Requested control families per track and per masked cell."""

    per_track: Mapping[int, frozenset[str]] = field(default_factory=dict)
    per_cell: Mapping[tuple[int, int], frozenset[str]] = field(default_factory=dict)

    @classmethod
    def build(cls, per_track=None, per_cell=None) -> "ControlSpec":
        track_spec = {}
        for t, families in (per_track or {}).items():
            unknown = set(families) - set(TRACK_CONTROL_FAMILIES)
            if unknown:
                raise ValueError(f"unknown track control families {sorted(unknown)}")
            track_spec[int(t)] = frozenset(families)
        cell_spec = {}
        for cell, families in (per_cell or {}).items():
            unknown = set(families) - set(CELL_CONTROL_FAMILIES)
            if unknown:
                raise ValueError(f"unknown cell control families {sorted(unknown)}")
            cell_spec[(int(cell[0]), int(cell[1]))] = frozenset(families)
        return cls(track_spec, cell_spec)


EMPTY_CONTROLS = ControlSpec()


@dataclass
class EncodeDiagnostics:
    clamped_durations: int = 0
    clamped_rhythm_counts: int = 0


@dataclass(frozen=True)
class PromptTargetPair:
    prompt: tuple[Tok, ...]
    target: tuple[Tok, ...]


def note_tokens(cell: TrackMeasure, diagnostics: EncodeDiagnostics | None = None) -> list[Tok]:
    """Position/note-on/duration stream for one cell: one position token per
    onset tick, notes at a tick in descending pitch order."""
    out: list[Tok] = []
    by_onset: dict[int, list[Note]] = {}
    for n in cell.notes:
        by_onset.setdefault(n.onset, []).append(n)
    for onset in sorted(by_onset):
        out.append(tk.pos(onset))
        for n in sorted(by_onset[onset], key=lambda x: -x.pitch):
            duration = n.duration
            if duration > tk.MAX_DURATION:
                duration = tk.MAX_DURATION
                if diagnostics is not None:
                    diagnostics.clamped_durations += 1
            out.append(tk.non(n.pitch))
            out.append(tk.dur(duration))
    return out


def _conditioning_tokens(cell: TrackMeasure, mode: str,
                         diagnostics: EncodeDiagnostics | None) -> list[Tok]:
    info = meas.rhythm_info([cell], mode)
    out: list[Tok] = []
    for entry in info.entries:
        tick, duration = entry[0], min(entry[1], tk.MAX_DURATION)
        if diagnostics is not None and entry[1] > tk.MAX_DURATION:
            diagnostics.clamped_durations += 1
        out.append(tk.pos(tick))
        if mode == COND_1D:
            out.append(tk.MP1D)
        else:
            n_onsets, n_classes = entry[2], entry[3]
            if diagnostics is not None and (n_onsets > tk.MAX_RHYTHM_COUNT
                                            or n_classes > tk.MAX_RHYTHM_COUNT):
                diagnostics.clamped_rhythm_counts += 1
            n_onsets = min(n_onsets, tk.MAX_RHYTHM_COUNT)
            n_classes = min(n_classes, min(n_onsets, tk.MAX_RHYTHM_COUNT))
            out.append(tk.mp2d(n_onsets, n_classes))
        out.append(tk.dur(duration))
    return out


def _require(condition: bool, message: str):
    if not condition:
        raise EncodeError(message)


def _cell_control_tokens(cell: TrackMeasure, families: frozenset[str]) -> list[Tok]:
    out: list[Tok] = []
    where = f"cell ({cell.track_index}, {cell.measure_index})"
    if "horiz" in families:
        out.append(tk.horiz(meas.horizontal_density([cell]).bin))
    if "vert" in families:
        _require(not cell.is_empty, f"vertical density control undefined for empty {where}")
        out.append(tk.vert(meas.vertical_density([cell]).bin))
    if "pcs" in families:
        _require(not cell.is_empty, f"pitch-class control undefined for empty {where}")
        out.append(tk.pcs(meas.pitch_classes_per_onset([cell]).bin))
    if "dnoc" in families:
        out.append(tk.DNOC_TOKEN)
    if "range_strict" in families:
        _require(not cell.is_empty, f"pitch range control undefined for empty {where}")
        rng = meas.pitch_range([cell])
        out.extend([Tok(tk.LO_STRICT), tk.non(rng.low), Tok(tk.HI_STRICT), tk.non(rng.high)])
    return out


def _track_control_tokens(track_index: int, families: frozenset[str],
                          masked_cells: Sequence[TrackMeasure]) -> list[Tok]:
    _require(bool(masked_cells),
             f"track {track_index} has controls but no masked cells to measure")
    where = f"masked content of track {track_index}"
    out: list[Tok] = []
    has_notes = any(not c.is_empty for c in masked_cells)
    if "horiz" in families:
        out.append(tk.horiz(meas.horizontal_density(masked_cells).bin))
    if "interest" in families:
        out.append(tk.interest(meas.rhythmic_interest(masked_cells).bin))
    if "vert" in families:
        _require(has_notes, f"vertical density undefined on {where}")
        out.append(tk.vert(meas.vertical_density(masked_cells).bin))
    if "pcs" in families:
        _require(has_notes, f"pitch classes per onset undefined on {where}")
        out.append(tk.pcs(meas.pitch_classes_per_onset(masked_cells).bin))
    if "step" in families or "leap" in families:
        _require(len(meas.chords(masked_cells)) >= 2,
                 f"step/leap propensity undefined on {where}")
        step_m, leap_m = meas.step_leap_propensity(masked_cells)
        if "step" in families:
            out.append(tk.step(step_m.bin))
        if "leap" in families:
            out.append(tk.leap(leap_m.bin))
    if "range_strict" in families:
        _require(has_notes, f"pitch range undefined on {where}")
        rng = meas.pitch_range(masked_cells)
        out.extend([Tok(tk.LO_STRICT), tk.non(rng.low), Tok(tk.HI_STRICT), tk.non(rng.high)])
    if "range_loose" in families:
        _require(has_notes, f"pitch range undefined on {where}")
        rng = meas.pitch_range(masked_cells)
        out.extend([Tok(tk.LO_LOOSE), tk.non(rng.low), Tok(tk.HI_LOOSE), tk.non(rng.high)])
    return out


def encode(slice_: MeasureSlice, masks: MaskSpec, controls: ControlSpec = EMPTY_CONTROLS,
           diagnostics: EncodeDiagnostics | None = None) -> PromptTargetPair:
    """Encode a slice with a mask/control specification into (prompt, target)."""
    grid = {(t, m) for t in range(slice_.num_tracks) for m in range(slice_.num_measures)}
    for cell in masks.cells:
        if cell not in grid:
            raise EncodeError(f"masked cell {cell} outside the slice grid")
    if len(masks) > tk.MAX_MASKS:
        raise EncodeError(f"{len(masks)} masked cells exceed the limit of {tk.MAX_MASKS}")
    mask_index = {cell: k for k, cell in enumerate(masks.cells)}

    prompt: list[Tok] = []
    for t in range(slice_.num_tracks):
        prompt.append(tk.inst(slice_.score.tracks[t].instrument))
        for m in range(slice_.num_measures):
            if m > 0:
                prompt.append(tk.MSEP)
            prompt.append(tk.mlen(slice_.measure_lengths[m]))
            cell = slice_.cell(t, m)
            if (t, m) in mask_index:
                prompt.append(tk.mask(mask_index[(t, m)]))
                families = controls.per_cell.get((t, m), frozenset())
                prompt.extend(_cell_control_tokens(cell, families))
                mode = masks.conditioning.get((t, m))
                if mode is not None:
                    prompt.extend(_conditioning_tokens(cell, mode, diagnostics))
            else:
                prompt.extend(note_tokens(cell, diagnostics))

    for t in sorted(controls.per_track):
        families = controls.per_track[t]
        if not families:
            continue
        if t >= tk.MAX_TRACKS:
            raise EncodeError(f"track {t} exceeds the per-track control limit "
                              f"of {tk.MAX_TRACKS} tracks")
        masked_cells = [slice_.cell(*cell) for cell in masks.cells if cell[0] == t]
        prompt.append(tk.track_ref(t))
        prompt.extend(_track_control_tokens(t, families, masked_cells))

    target: list[Tok] = []
    for k, cell in enumerate(masks.cells):
        target.append(tk.fill(k))
        target.extend(note_tokens(slice_.cell(*cell), diagnostics))
    target.append(tk.EOT_TOKEN)
    return PromptTargetPair(tuple(prompt), tuple(target))


@dataclass
class DecodeResult:
    """Decoded notes per masked cell. Onsets are relative to the measure start.

    ``complete`` is False when the stream ended before end-of-target; only
    complete fill blocks (terminated by the next fill or end-of-target)
    contribute notes.
    """

    notes: dict[tuple[int, int], tuple[Note, ...]]
    complete: bool


def decode(target: Sequence[Tok], masks: MaskSpec,
           measure_lengths: Sequence[int]) -> DecodeResult:
    """Decode a target stream against its mask spec and slice measure lengths."""
    notes: dict[tuple[int, int], tuple[Note, ...]] = {cell: () for cell in masks.cells}
    pending: list[Note] = []
    current: tuple[int, int] | None = None
    current_len = 0
    last_fill = -1
    last_pos = -1
    state = "block"  # block | after_pos | after_non
    pending_pitch = 0
    complete = False

    def close_block():
        if current is not None:
            notes[current] = tuple(sorted(pending, key=lambda n: (n.onset, n.pitch)))
        pending.clear()

    for i, token in enumerate(target):
        fam = token.family
        if state == "after_pos" and fam != tk.NOTE_ON:
            raise DecodeError(f"expected note-on after position, got {tk.render(token)}", i)
        if state == "after_non" and fam != tk.DURATION:
            raise DecodeError(f"expected duration after note-on, got {tk.render(token)}", i)

        if fam == tk.FILL:
            if token.a <= last_fill:
                raise DecodeError(f"fill index {token.a} not ascending", i)
            if token.a >= len(masks):
                raise DecodeError(f"fill index {token.a} beyond the {len(masks)} masks", i)
            close_block()
            last_fill = token.a
            current = masks.cells[token.a]
            current_len = measure_lengths[current[1]]
            last_pos = -1
            state = "block"
        elif fam == tk.EOT:
            close_block()
            complete = True
            break  # anything after end-of-target is ignored
        elif fam == tk.POSITION:
            if current is None:
                raise DecodeError("position before any fill token", i)
            if token.a >= current_len:
                raise DecodeError(
                    f"position {token.a} beyond measure length {current_len}", i)
            if token.a <= last_pos:
                raise DecodeError(f"position {token.a} not ascending", i)
            last_pos = token.a
            state = "after_pos"
        elif fam == tk.NOTE_ON:
            if current is None or last_pos < 0:
                raise DecodeError("note-on before any position", i)
            pending_pitch = token.a
            state = "after_non"
        elif fam == tk.DURATION:
            if state != "after_non":
                raise DecodeError("duration without a preceding note-on", i)
            pending.append(Note(pending_pitch, last_pos, token.a))
            state = "block"
        else:
            raise DecodeError(f"token {tk.render(token)} is not part of the target grammar", i)

    if not complete:
        # the dangling block (if any) was never terminated; its notes are dropped
        pending.clear()
    return DecodeResult(notes=notes, complete=complete)


def decode_ids(target_ids: Sequence[int], masks: MaskSpec,
               measure_lengths: Sequence[int]) -> DecodeResult:
    return decode(tk.from_ids(target_ids), masks, measure_lengths)


def decode_salvage(target: Sequence[Tok], masks: MaskSpec,
                   measure_lengths: Sequence[int]) -> tuple[DecodeResult, bool]:
    """Decode as much as possible. Returns (result, grammatical): on a grammar
    error the stream is cut at the offending token, so only the complete fill
    blocks before it survive."""
    try:
        return decode(target, masks, measure_lengths), True
    except DecodeError as exc:
        result = decode(list(target)[: exc.offset], masks, measure_lengths)
        return DecodeResult(notes=result.notes, complete=False), False


def score_from_prompt(prompt: Sequence[Tok],
                      target: Sequence[Tok] | None = None) -> QuantizedScore:
    """Rebuild a score from a prompt-format token stream.

    Masked cells come back empty unless a target stream is supplied, in which
    case its fills are merged in. Conditioning and control tokens carry no
    notes and are skipped.
    """
    tracks: list[tuple[int, list[Note]]] = []
    lengths: list[int] = []
    first_track_lengths: list[int] | None = None
    masked: list[tuple[int, int]] = []
    measure = -1
    current_pos = -1
    in_mask = False
    notes: list[Note] = []
    pending_pitch: int | None = None

    def flush_track():
        nonlocal first_track_lengths, lengths, notes
        if not tracks:
            return
        if first_track_lengths is None:
            first_track_lengths = list(lengths)
        elif lengths != first_track_lengths:
            raise DecodeError("tracks disagree on measure lengths", 0)
        tracks[-1] = (tracks[-1][0], notes)

    i = 0
    for i, token in enumerate(prompt):
        fam = token.family
        if fam == tk.TRACK_REF:
            break  # per-track control blocks carry no notes
        if fam == tk.INSTRUMENT:
            flush_track()
            tracks.append((token.a, []))
            notes = []
            lengths = []
            measure = -1
            in_mask = False
        elif fam == tk.MEASURE_LENGTH:
            lengths.append(token.a)
            measure += 1
            current_pos = -1
            in_mask = False
        elif fam == tk.MEASURE_SEP:
            continue
        elif fam == tk.MASK:
            masked.append((len(tracks) - 1, measure))
            in_mask = True
        elif fam == tk.POSITION:
            current_pos = token.a
        elif fam == tk.NOTE_ON:
            if in_mask:
                continue  # range-control value token
            pending_pitch = token.a
        elif fam == tk.DURATION:
            if in_mask or pending_pitch is None:
                continue  # conditioning skeleton
            start = sum(lengths[:measure]) + current_pos
            notes.append(Note(pending_pitch, start, token.a))
            pending_pitch = None
        elif fam in (tk.MASKED_PITCH_1D, tk.MASKED_PITCH_2D, tk.DNOC, tk.HORIZ,
                     tk.INTEREST, tk.VERT, tk.PCS, tk.STEP, tk.LEAP,
                     tk.LO_STRICT, tk.HI_STRICT, tk.LO_LOOSE, tk.HI_LOOSE):
            continue
        else:
            raise DecodeError(f"token {tk.render(token)} is not part of the prompt grammar", i)
    flush_track()
    if first_track_lengths is None:
        raise DecodeError("prompt contains no measures", i)

    if target is not None and masked:
        spec = MaskSpec.build(masked)
        result = decode(target, spec, first_track_lengths)
        for (t, m), cell_notes in result.notes.items():
            base = sum(first_track_lengths[:m])
            existing = {(n.pitch, n.onset): n for n in tracks[t][1]}
            for n in cell_notes:
                key = (n.pitch, base + n.onset)
                prev = existing.get(key)
                if prev is None or prev.duration < n.duration:
                    existing[key] = Note(n.pitch, base + n.onset, n.duration)
            tracks[t] = (tracks[t][0], list(existing.values()))

    built = tuple(
        Track(instrument=instrument, name="", notes=tuple(track_notes))
        for instrument, track_notes in tracks
    )
    return QuantizedScore(tracks=built, measure_map=MeasureMap(tuple(first_track_lengths)))


def satisfies_strict_range(pitches: Iterable[int], low: int, high: int) -> bool:
    """At least one note at each extreme and none outside."""
    pitches = list(pitches)
    return bool(pitches) and min(pitches) == low and max(pitches) == high


def satisfies_loose_range(pitches: Iterable[int], low: int, high: int) -> bool:
    """Nothing outside the extremes, and at least one note within 7 semitones
    of each extreme."""
    pitches = list(pitches)
    return (bool(pitches)
            and min(pitches) >= low and max(pitches) <= high
            and any(p <= low + 7 for p in pitches)
            and any(p >= high - 7 for p in pitches))
