from __future__ import annotations

import numpy as np
import pytest

import trackfill.encoding as enc
import trackfill.tokens as tk
from trackfill.errors import DecodeError, EncodeError
from trackfill.score import MeasureMap, Note, QuantizedScore, Track
from corpusgen import make_score


def two_track_score():
    return QuantizedScore(
        tracks=(
            Track(0, "melody", (Note(60, 0, 24), Note(64, 24, 24), Note(67, 48, 24),
                                Note(72, 96, 48))),
            Track(40, "pad", (Note(48, 0, 96), Note(52, 0, 96), Note(55, 96, 96))),
        ),
        measure_map=MeasureMap((96, 96)),
    )


def masked_notes(slice_, masks):
    return {
        cell: tuple(sorted((n.pitch, n.onset, n.duration)
                           for n in slice_.cell(*cell).notes))
        for cell in masks.cells
    }


def decoded_notes(result):
    return {
        cell: tuple(sorted((n.pitch, n.onset, n.duration) for n in notes))
        for cell, notes in result.notes.items()
    }


def random_slice_and_masks(rng):
    score = make_score(int(rng.integers(0, 100_000)))
    n = int(rng.integers(1, 5))
    start = int(rng.integers(0, score.num_measures - n + 1))
    slice_ = score.slice(start, n)
    cells = [(t, m) for t in range(slice_.num_tracks) for m in range(slice_.num_measures)]
    k = int(rng.integers(1, len(cells) + 1))
    picked = [cells[i] for i in rng.choice(len(cells), size=k, replace=False)]
    conditioning = {}
    for cell in picked:
        mode = int(rng.integers(0, 3))
        if mode == 1:
            conditioning[cell] = "1d"
        elif mode == 2:
            conditioning[cell] = "2d"
    return slice_, enc.MaskSpec.build(picked, conditioning)


# --- encode -------------------------------------------------------------------

def test_empty_mask_spec():
    slice_ = two_track_score().slice(0, 2)
    pair = enc.encode(slice_, enc.MaskSpec.build([]))
    assert pair.target == (tk.EOT_TOKEN,)
    note_ons = [t for t in pair.prompt if t.family == tk.NOTE_ON]
    assert len(note_ons) == 7  # every note appears


def test_1d_conditioning_layout():
    slice_ = two_track_score().slice(0, 2)
    masks = enc.MaskSpec.build([(0, 0)], {(0, 0): "1d"})
    pair = enc.encode(slice_, masks)
    text = tk.render_text(pair.prompt)
    assert ("<mask:0> <pos:0> <mp1d> <dur:24> <pos:24> <mp1d> <dur:24> "
            "<pos:48> <mp1d> <dur:24>") in text
    # one masked-pitch token per ground-truth onset tick
    assert sum(1 for t in pair.prompt if t.family == tk.MASKED_PITCH_1D) == 3


def test_2d_conditioning_counts():
    score = QuantizedScore(
        tracks=(Track(0, "", (Note(48, 0, 24), Note(60, 0, 24), Note(64, 0, 24))),),
        measure_map=MeasureMap((96,)),
    )
    slice_ = score.slice(0, 1)
    masks = enc.MaskSpec.build([(0, 0)], {(0, 0): "2d"})
    pair = enc.encode(slice_, masks)
    assert tk.mp2d(3, 2) in pair.prompt


def test_prompt_layout_order():
    slice_ = two_track_score().slice(0, 2)
    masks = enc.MaskSpec.build([(1, 0)])
    controls = enc.ControlSpec.build(per_track={1: {"horiz"}},
                                     per_cell={(1, 0): {"vert", "range_strict"}})
    pair = enc.encode(slice_, masks, controls)
    text = tk.render_text(pair.prompt)
    # masked content of track 1 is one onset tick over 96 ticks: horiz bin 0
    assert text == (
        "<inst:0> <mlen:96> <pos:0> <non:60> <dur:24> <pos:24> <non:64> <dur:24>"
        " <pos:48> <non:67> <dur:24> <msep> <mlen:96> <pos:0> <non:72> <dur:48>"
        " <inst:40> <mlen:96> <mask:0> <vert:1> <lo-strict> <non:48> <hi-strict> <non:52>"
        " <msep> <mlen:96> <pos:0> <non:55> <dur:96>"
        " <track:1> <horiz:0>"
    )


def test_notes_at_tick_sorted_by_descending_pitch():
    slice_ = two_track_score().slice(0, 1)
    pair = enc.encode(slice_, enc.MaskSpec.build([]))
    text = tk.render_text(pair.prompt)
    assert "<non:52> <dur:96> <non:48> <dur:96>" in text


def test_undefined_control_errors_name_the_cell():
    score = QuantizedScore(
        tracks=(Track(0, "", (Note(60, 0, 24),)), Track(1, "", (Note(50, 96, 24),))),
        measure_map=MeasureMap((96, 96)),
    )
    slice_ = score.slice(0, 2)
    masks = enc.MaskSpec.build([(0, 1)])  # empty cell
    controls = enc.ControlSpec.build(per_cell={(0, 1): {"vert"}})
    with pytest.raises(EncodeError) as err:
        enc.encode(slice_, masks, controls)
    assert "(0, 1)" in str(err.value)
    assert "vertical" in str(err.value)


def test_track_controls_need_masked_content():
    slice_ = two_track_score().slice(0, 2)
    controls = enc.ControlSpec.build(per_track={0: {"horiz"}})
    with pytest.raises(EncodeError):
        enc.encode(slice_, enc.MaskSpec.build([(1, 0)]), controls)


def test_mask_outside_grid_rejected():
    slice_ = two_track_score().slice(0, 2)
    with pytest.raises(EncodeError):
        enc.encode(slice_, enc.MaskSpec.build([(5, 0)]))


def test_encoding_is_deterministic():
    slice_ = two_track_score().slice(0, 2)
    masks = enc.MaskSpec.build([(0, 0), (1, 1)], {(0, 0): "2d"})
    controls = enc.ControlSpec.build(per_track={0: {"step", "leap"}})
    a = enc.encode(slice_, masks, controls)
    b = enc.encode(slice_, masks, controls)
    assert a == b
    assert tk.to_ids(a.prompt) == tk.to_ids(b.prompt)


def test_duration_clamped_with_diagnostics():
    score = QuantizedScore(
        tracks=(Track(0, "", (Note(60, 0, 500),)),),
        measure_map=MeasureMap((96,) * 6),
    )
    slice_ = score.slice(0, 6)
    diagnostics = enc.EncodeDiagnostics()
    pair = enc.encode(slice_, enc.MaskSpec.build([]), diagnostics=diagnostics)
    assert tk.dur(192) in pair.prompt
    assert diagnostics.clamped_durations == 1


# --- decode -------------------------------------------------------------------

def test_round_trip_reproduces_masked_notes():
    slice_ = two_track_score().slice(0, 2)
    masks = enc.MaskSpec.build([(0, 0), (0, 1), (1, 0)])
    pair = enc.encode(slice_, masks)
    result = enc.decode(pair.target, masks, slice_.measure_lengths)
    assert result.complete
    assert decoded_notes(result) == masked_notes(slice_, masks)


def test_eot_only_decodes_all_cells_empty():
    masks = enc.MaskSpec.build([(0, 0), (1, 1)])
    result = enc.decode((tk.EOT_TOKEN,), masks, [96, 96])
    assert result.complete
    assert all(notes == () for notes in result.notes.values())


def test_truncated_target_keeps_complete_blocks():
    slice_ = two_track_score().slice(0, 2)
    masks = enc.MaskSpec.build([(0, 0), (1, 0)])
    pair = enc.encode(slice_, masks)
    # cut inside the second fill block
    cut = len(pair.target) - 2
    result = enc.decode(pair.target[:cut], masks, slice_.measure_lengths)
    assert not result.complete
    assert decoded_notes(result)[(0, 0)] == masked_notes(slice_, masks)[(0, 0)]
    assert result.notes[(1, 0)] == ()


def test_tokens_after_eot_ignored():
    masks = enc.MaskSpec.build([(0, 0)])
    stream = (tk.fill(0), tk.pos(0), tk.non(60), tk.dur(24), tk.EOT_TOKEN,
              tk.inst(3), tk.dur(1))
    result = enc.decode(stream, masks, [96])
    assert result.complete
    assert [n.pitch for n in result.notes[(0, 0)]] == [60]


def test_grammar_error_duration_before_note_on():
    masks = enc.MaskSpec.build([(0, 0)])
    stream = (tk.fill(0), tk.pos(0), tk.dur(24))
    with pytest.raises(DecodeError) as err:
        enc.decode(stream, masks, [96])
    assert err.value.offset == 2


def test_position_beyond_measure_length_errors():
    masks = enc.MaskSpec.build([(0, 0)])
    stream = (tk.fill(0), tk.pos(80), tk.non(60), tk.dur(24))
    with pytest.raises(DecodeError):
        enc.decode(stream, masks, [72])


def test_fill_indices_must_ascend():
    masks = enc.MaskSpec.build([(0, 0), (0, 1)])
    stream = (tk.fill(1), tk.fill(0), tk.EOT_TOKEN)
    with pytest.raises(DecodeError):
        enc.decode(stream, masks, [96, 96])


def test_fill_gaps_decode_empty():
    masks = enc.MaskSpec.build([(0, 0), (0, 1)])
    stream = (tk.fill(1), tk.pos(0), tk.non(60), tk.dur(24), tk.EOT_TOKEN)
    result = enc.decode(stream, masks, [96, 96])
    assert result.notes[(0, 0)] == ()
    assert [n.pitch for n in result.notes[(0, 1)]] == [60]


def test_decode_salvage_cuts_at_grammar_error():
    masks = enc.MaskSpec.build([(0, 0), (0, 1)])
    stream = (tk.fill(0), tk.pos(0), tk.non(60), tk.dur(24),
              tk.fill(1), tk.dur(3), tk.EOT_TOKEN)
    result, grammatical = enc.decode_salvage(stream, masks, [96, 96])
    assert not grammatical
    assert [n.pitch for n in result.notes[(0, 0)]] == [60]
    assert result.notes[(0, 1)] == ()


# --- invariants ----------------------------------------------------------------

def test_round_trip_many_random_slices():
    rng = np.random.default_rng(123)
    for _ in range(300):
        slice_, masks = random_slice_and_masks(rng)
        pair = enc.encode(slice_, masks)
        result = enc.decode(pair.target, masks, slice_.measure_lengths)
        assert result.complete
        assert decoded_notes(result) == masked_notes(slice_, masks)


def test_prompt_target_note_partition():
    rng = np.random.default_rng(7)
    for _ in range(100):
        slice_, masks = random_slice_and_masks(rng)
        pair = enc.encode(slice_, masks)
        prompt_score = enc.score_from_prompt(pair.prompt)
        prompt_notes = [
            (t, n.pitch, n.onset, n.duration)
            for t, track in enumerate(prompt_score.tracks) for n in track.notes
        ]
        result = enc.decode(pair.target, masks, slice_.measure_lengths)
        offsets = np.concatenate([[0], np.cumsum(slice_.measure_lengths)])
        target_notes = [
            (t, n.pitch, int(offsets[m]) + n.onset, min(n.duration, tk.MAX_DURATION))
            for (t, m), notes in result.notes.items() for n in notes
        ]
        whole = [(t, p, o, min(d, tk.MAX_DURATION))
                 for t, p, o, d in slice_.note_multiset()]
        assert sorted(prompt_notes + target_notes) == sorted(whole)


def test_control_locality_under_unmasked_mutation():
    rng = np.random.default_rng(99)
    trials = 0
    while trials < 100:
        slice_, masks = random_slice_and_masks(rng)
        unmasked = [
            (t, m)
            for t in range(slice_.num_tracks) for m in range(slice_.num_measures)
            if (t, m) not in set(masks.cells)
        ]
        if not unmasked:
            continue
        trials += 1
        controls = _max_defined_controls(slice_, masks)
        base = enc.encode(slice_, masks, controls)

        # mutate one unmasked cell: transpose and shift its notes
        t, m = unmasked[int(rng.integers(len(unmasked)))]
        mutated_score = _mutate_cell(slice_, t, m)
        mutated_slice = mutated_score.slice(slice_.start, slice_.num_measures)
        other = enc.encode(mutated_slice, masks, controls)

        assert _control_tokens(base.prompt) == _control_tokens(other.prompt)
        assert base.target == other.target


def _max_defined_controls(slice_, masks):
    import trackfill.measurements as meas
    per_cell = {}
    for cell_key in masks.cells:
        cell = slice_.cell(*cell_key)
        fams = {"horiz"}
        if not cell.is_empty:
            fams |= {"vert", "pcs", "range_strict", "dnoc"}
        per_cell[cell_key] = fams
    per_track = {}
    for t in sorted({c[0] for c in masks.cells}):
        cells = [slice_.cell(*c) for c in masks.cells if c[0] == t]
        fams = {"horiz", "interest"}
        if any(not c.is_empty for c in cells):
            fams |= {"vert", "pcs", "range_strict", "range_loose"}
        if len(meas.chords(cells)) >= 2:
            fams |= {"step", "leap"}
        per_track[t] = fams
    return enc.ControlSpec.build(per_track=per_track, per_cell=per_cell)


def _control_tokens(prompt):
    families = {tk.HORIZ, tk.INTEREST, tk.VERT, tk.PCS, tk.STEP, tk.LEAP, tk.DNOC,
                tk.LO_STRICT, tk.HI_STRICT, tk.LO_LOOSE, tk.HI_LOOSE, tk.TRACK_REF}
    out = []
    take_next_non = False
    for token in prompt:
        if take_next_non:
            out.append(token)
            take_next_non = False
        elif token.family in families:
            out.append(token)
            take_next_non = token.family in (tk.LO_STRICT, tk.HI_STRICT,
                                             tk.LO_LOOSE, tk.HI_LOOSE)
    return out


def _mutate_cell(slice_, t, m):
    score = slice_.score
    mm = score.measure_map
    start = mm.start(slice_.start + m)
    end = mm.end(slice_.start + m)
    tracks = list(score.tracks)
    track = tracks[t]
    kept = [n for n in track.notes if not (start <= n.onset < end)]
    replacement = [Note(30 + (n.pitch % 40), n.onset, max(1, n.duration // 2))
                   for n in track.notes if start <= n.onset < end]
    if not replacement:
        replacement = [Note(37, start + 12, 7)]
    merged = {}
    for n in kept + replacement:
        key = (n.pitch, n.onset)
        if key not in merged or merged[key].duration < n.duration:
            merged[key] = n
    tracks[t] = Track(track.instrument, track.name, tuple(merged.values()))
    return QuantizedScore(tracks=tuple(tracks), measure_map=mm)


# --- range predicates -----------------------------------------------------------

def test_strict_range_predicate():
    assert enc.satisfies_strict_range([50, 60, 70], 50, 70)
    assert not enc.satisfies_strict_range([51, 60, 70], 50, 70)  # low never touched
    assert not enc.satisfies_strict_range([50, 60, 71], 50, 70)  # outside
    assert not enc.satisfies_strict_range([], 50, 70)


def test_loose_range_predicate():
    assert enc.satisfies_loose_range([55, 64], 50, 70)       # within 7 of both ends
    assert not enc.satisfies_loose_range([58, 60], 50, 70)   # nothing near either end
    assert not enc.satisfies_loose_range([55, 75], 50, 70)   # beyond the top
    assert not enc.satisfies_loose_range([], 50, 70)


# --- prompt reconstruction -------------------------------------------------------

def test_score_from_prompt_with_target_restores_slice():
    slice_ = two_track_score().slice(0, 2)
    masks = enc.MaskSpec.build([(0, 0), (1, 1)], {(0, 0): "2d"})
    controls = enc.ControlSpec.build(per_cell={(0, 0): {"horiz"}})
    pair = enc.encode(slice_, masks, controls)
    rebuilt = enc.score_from_prompt(pair.prompt, pair.target)
    assert rebuilt.note_multiset() == [
        (t, p, o, d) for t, p, o, d in slice_.note_multiset()
    ]
