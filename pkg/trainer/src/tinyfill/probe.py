"""Empty-prompt control probes.

A probe prompts the model to write one bar of single-track music from
scratch, with and without one control token, and hands the outputs to the
toolkit's compliance checker. The distinct-chromagram probe instead supplies
a two-track ostinato an octave apart and asks for a third track.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .sample import generate
from .vocab import Vocab

MEASURE = 96

# the ostinato context for the distinct-chromagram probe
_OSTINATO_TOP = [(60, 0, 24), (63, 24, 24), (67, 48, 24), (63, 72, 24)]


@dataclass
class ProbeSpec:
    control: str | None      # token text, e.g. "<horiz:1>"; None = unconditioned
    sample_count: int = 200
    measures: int = 1

    def __post_init__(self):
        if self.sample_count < 1:
            raise ValueError("sample count must be positive")


def empty_prompt(vocab: Vocab, control: str | None, *, measures: int = 1,
                 instrument: int = 0) -> tuple[list[int], list[int]]:
    """Single-track all-masked prompt, control appended at the track level."""
    pieces = [f"<inst:{instrument}>"]
    for m in range(measures):
        if m:
            pieces.append("<msep>")
        pieces.append(f"<mlen:{MEASURE}>")
        pieces.append(f"<mask:{m}>")
    if control:
        pieces.append("<track:0>")
        pieces.append(control)
    return vocab.ids(" ".join(pieces)), [MEASURE] * measures


def dnoc_prompt(vocab: Vocab, with_token: bool) -> tuple[list[int], list[int], list]:
    """Viola/cello ostinato one octave apart; the model writes the third track."""
    def track(instrument: int, notes):
        parts = [f"<inst:{instrument}>", f"<mlen:{MEASURE}>"]
        for pitch, onset, duration in notes:
            parts.append(f"<pos:{onset}> <non:{pitch}> <dur:{duration}>")
        return " ".join(parts)

    bottom = [(p - 12, o, d) for p, o, d in _OSTINATO_TOP]
    pieces = [track(41, _OSTINATO_TOP), track(42, bottom),
              "<inst:40> <mlen:96> <mask:0>"]
    if with_token:
        pieces[-1] += " <dnoc>"
    context = ([[0, 0, p, o, d] for p, o, d in _OSTINATO_TOP]
               + [[1, 0, p, o, d] for p, o, d in bottom])
    return vocab.ids(" ".join(pieces)), [MEASURE], context


def run_probe(model, vocab: Vocab, spec: ProbeSpec, *, seed: int = 0,
              batch_size: int = 64, nucleus_p: float | None = None) -> list[dict]:
    """Compliance records (toolkit `comply` schema) for one probe cell."""
    is_dnoc = spec.control == "<dnoc>"
    if is_dnoc:
        prompt, lengths, context = dnoc_prompt(vocab, with_token=True)
        masks = [[2, 0]]
    else:
        prompt, lengths = empty_prompt(vocab, spec.control, measures=spec.measures)
        masks = [[0, m] for m in range(spec.measures)]
        context = []

    records = []
    remaining = spec.sample_count
    batch_index = 0
    while remaining > 0:
        size = min(batch_size, remaining)
        results = generate(model, vocab, [prompt] * size, [lengths] * size,
                           nucleus_p=nucleus_p,
                           seed=seed * 100_003 + batch_index)
        for i, result in enumerate(results):
            records.append({
                "id": f"probe:{spec.control or 'none'}:{batch_index}:{i}",
                "control": spec.control,
                "target_ids": result.ids,
                "masks": masks,
                "measure_lengths": lengths,
                "context_notes": context,
            })
        remaining -= size
        batch_index += 1
    return records


def unconditioned_baseline(model, vocab: Vocab, *, sample_count: int,
                           measures: int = 1, dnoc_context: bool = False,
                           seed: int = 1, nucleus_p: float | None = None) -> list[dict]:
    """Outputs with no control token, used as the comparison distribution."""
    if dnoc_context:
        prompt, lengths, context = dnoc_prompt(vocab, with_token=False)
        masks = [[2, 0]]
    else:
        prompt, lengths = empty_prompt(vocab, None, measures=measures)
        masks = [[0, m] for m in range(measures)]
        context = []
    records = []
    remaining = sample_count
    batch_index = 0
    while remaining > 0:
        size = min(64, remaining)
        results = generate(model, vocab, [prompt] * size, [lengths] * size,
                           nucleus_p=nucleus_p, seed=seed * 90_001 + batch_index)
        for i, result in enumerate(results):
            records.append({
                "id": f"baseline:{'dnoc' if dnoc_context else 'empty'}:{batch_index}:{i}",
                "control": None,
                "target_ids": result.ids,
                "masks": masks,
                "measure_lengths": lengths,
                "context_notes": context,
            })
        remaining -= size
        batch_index += 1
    return records


def write_records(records: list[dict], path: Path) -> Path:
    with path.open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record) + "\n")
    return path
