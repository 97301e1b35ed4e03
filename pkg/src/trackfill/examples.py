"""Training-example and test-set builders with deterministic seeding.

All sampling is driven by per-example RNG streams derived from
(global seed, source id, slice index), so per-file parallelism cannot change
the output. Ineligible slices raise `SkipSlice`, which corpus drivers record
and continue past.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Iterable

import numpy as np

from . import measurements as meas
from . import tokens as tk
from .encoding import (
    COND_2D,
    ControlSpec,
    EMPTY_CONTROLS,
    MaskSpec,
    PromptTargetPair,
    encode,
)
from .errors import EncodeError, TrackfillError
from .score import MeasureSlice, QuantizedScore

TEST_SLICE_MEASURES = 8


class SkipSlice(TrackfillError):
    """The slice is ineligible for the requested task."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


@dataclass(frozen=True)
class GenConfig:
    """Sampling knobs. The test-set protocols only use `mask_probability`."""

    mask_probability: float = 0.5
    control_probability: float = 0.5
    conditioning_probs: tuple[float, float, float] = (0.5, 0.25, 0.25)  # none/1d/2d
    min_train_mask_rate: float = 0.1
    max_train_mask_rate: float = 0.9
    max_slice_measures: int = 8
    slices_per_file: int = 3

    def __post_init__(self):
        probs = (self.mask_probability, self.control_probability,
                 *self.conditioning_probs, self.min_train_mask_rate,
                 self.max_train_mask_rate)
        if any(not 0.0 <= p <= 1.0 for p in probs):
            raise ValueError("probabilities must lie in [0, 1]")
        if abs(sum(self.conditioning_probs) - 1.0) > 1e-9:
            raise ValueError("conditioning probabilities must sum to 1")


DEFAULT_CONFIG = GenConfig()


@dataclass
class InfillExample:
    id: str
    task: str
    source: str
    slice_start: int
    slice_len: int
    seed: int
    prompt_ids: list[int]
    target_ids: list[int]
    prompt_text: str
    masks: list[tuple[int, int]]
    conditioning: dict[tuple[int, int], str]
    controls: ControlSpec
    measure_lengths: list[int]
    instruments: list[int]
    ground_truth: list[tuple[int, int, int, int, int]]  # (track, measure, pitch, onset, dur)
    auto_credited: list[tuple[int, int]]

    def mask_spec(self) -> MaskSpec:
        return MaskSpec.build(self.masks, self.conditioning)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "task": self.task,
            "source": self.source,
            "slice": [self.slice_start, self.slice_len],
            "seed": self.seed,
            "prompt_ids": self.prompt_ids,
            "target_ids": self.target_ids,
            "prompt_text": self.prompt_text,
            "masks": [list(c) for c in self.masks],
            "conditioning": [[t, m, mode] for (t, m), mode in sorted(self.conditioning.items())],
            "controls": {
                "track": {str(t): sorted(fams) for t, fams in sorted(self.controls.per_track.items())},
                "cell": [[t, m, sorted(fams)] for (t, m), fams in sorted(self.controls.per_cell.items())],
            },
            "measure_lengths": self.measure_lengths,
            "instruments": self.instruments,
            "ground_truth": [list(g) for g in self.ground_truth],
            "auto_credited": [list(c) for c in self.auto_credited],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "InfillExample":
        controls = ControlSpec.build(
            per_track={int(t): frozenset(f) for t, f in d["controls"]["track"].items()},
            per_cell={(t, m): frozenset(f) for t, m, f in d["controls"]["cell"]},
        )
        return cls(
            id=d["id"],
            task=d["task"],
            source=d["source"],
            slice_start=d["slice"][0],
            slice_len=d["slice"][1],
            seed=d["seed"],
            prompt_ids=list(d["prompt_ids"]),
            target_ids=list(d["target_ids"]),
            prompt_text=d["prompt_text"],
            masks=[tuple(c) for c in d["masks"]],
            conditioning={(t, m): mode for t, m, mode in d["conditioning"]},
            controls=controls,
            measure_lengths=list(d["measure_lengths"]),
            instruments=list(d["instruments"]),
            ground_truth=[tuple(g) for g in d["ground_truth"]],
            auto_credited=[tuple(c) for c in d["auto_credited"]],
        )


def derive_seed(global_seed: int, *parts) -> int:
    """Stable 64-bit stream seed from a global seed and identifying parts."""
    text = "|".join([str(global_seed), *map(str, parts)])
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "big")


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def _ground_truth(slice_: MeasureSlice, cells: Iterable[tuple[int, int]]):
    out = []
    for t, m in sorted(cells):
        for n in slice_.cell(t, m).notes:
            out.append((t, m, n.pitch, n.onset, n.duration))
    return out


def _finalize(slice_: MeasureSlice, masks: MaskSpec, controls: ControlSpec, *,
              task: str, source: str, seed: int, example_id: str,
              auto_credited: list[tuple[int, int]] | None = None,
              truth_cells: Iterable[tuple[int, int]] | None = None) -> InfillExample:
    pair: PromptTargetPair = encode(slice_, masks, controls)
    truth_cells = list(truth_cells) if truth_cells is not None else list(masks.cells)
    return InfillExample(
        id=example_id,
        task=task,
        source=source,
        slice_start=slice_.start,
        slice_len=slice_.num_measures,
        seed=seed,
        prompt_ids=tk.to_ids(pair.prompt),
        target_ids=tk.to_ids(pair.target),
        prompt_text=tk.render_text(pair.prompt),
        masks=list(masks.cells),
        conditioning=dict(masks.conditioning),
        controls=controls,
        measure_lengths=list(slice_.measure_lengths),
        instruments=[tr.instrument for tr in slice_.score.tracks],
        ground_truth=_ground_truth(slice_, truth_cells),
        auto_credited=list(auto_credited or []),
    )


def build_random_infill(slice_: MeasureSlice, seed: int, *,
                        source: str = "", example_id: str = "",
                        config: GenConfig = DEFAULT_CONFIG,
                        max_controls: bool = False) -> InfillExample:
    """Mask each cell independently with the configured probability; resample
    until a masked cell contains a note."""
    if slice_.num_measures != TEST_SLICE_MEASURES:
        raise SkipSlice("slice is not 8 measures")
    if not any(not c.is_empty for c in slice_.iter_cells()):
        raise SkipSlice("slice contains no notes")
    rng = _rng(seed)
    cells = [(t, m) for t in range(slice_.num_tracks) for m in range(slice_.num_measures)]
    for _ in range(1000):
        chosen = [c for c in cells if rng.random() < config.mask_probability]
        if chosen and any(not slice_.cell(*c).is_empty for c in chosen):
            break
    else:
        raise SkipSlice("could not sample a non-trivial mask set")
    masks = MaskSpec.build(chosen)
    return _assemble(slice_, masks, seed, task="random", source=source,
                     example_id=example_id, max_controls=max_controls)


def build_track_infill(slice_: MeasureSlice, seed: int, *,
                       source: str = "", example_id: str = "",
                       config: GenConfig = DEFAULT_CONFIG,
                       max_controls: bool = False) -> InfillExample:
    """Mask one whole track that has onsets in at least 7 of the 8 measures."""
    if slice_.num_measures != TEST_SLICE_MEASURES:
        raise SkipSlice("slice is not 8 measures")
    if slice_.num_tracks < 2:
        raise SkipSlice("track infilling needs at least 2 tracks")
    eligible = [
        t for t in range(slice_.num_tracks)
        if sum(1 for m in range(slice_.num_measures) if not slice_.cell(t, m).is_empty) >= 7
    ]
    if not eligible:
        raise SkipSlice("no track has onsets in at least 7 measures")
    track = eligible[_rng(seed).integers(len(eligible))]
    masks = MaskSpec.build([(track, m) for m in range(slice_.num_measures)])
    return _assemble(slice_, masks, seed, task="track", source=source,
                     example_id=example_id, max_controls=max_controls)


def build_last_bar(slice_: MeasureSlice, seed: int, *,
                   source: str = "", example_id: str = "",
                   config: GenConfig = DEFAULT_CONFIG,
                   max_controls: bool = False) -> InfillExample:
    """Mask every cell of the slice's final measure."""
    last = slice_.num_measures - 1
    if all(slice_.cell(t, last).is_empty for t in range(slice_.num_tracks)):
        raise SkipSlice("last measure contains no notes")
    masks = MaskSpec.build([(t, last) for t in range(slice_.num_tracks)])
    return _assemble(slice_, masks, seed, task="lastbar", source=source,
                     example_id=example_id, max_controls=max_controls)


def _assemble(slice_, masks, seed, *, task, source, example_id, max_controls):
    try:
        if max_controls:
            return apply_max_controls(slice_, masks, task=task, source=source,
                                      seed=seed, example_id=example_id)
        return _finalize(slice_, masks, EMPTY_CONTROLS, task=task, source=source,
                         seed=seed, example_id=example_id)
    except EncodeError as exc:
        raise SkipSlice(f"unencodable slice: {exc}") from exc


def apply_max_controls(slice_: MeasureSlice, masks: MaskSpec, *, task: str,
                       source: str, seed: int, example_id: str) -> InfillExample:
    """Re-encode with every applicable control: 2D conditioning on each masked
    cell, per-track step/leap, strict per-cell pitch ranges, and the
    distinct-chromagram token where the ground truth satisfies it.

    Masked cells holding exactly one distinct pitch are unmasked instead
    (their conditioning already determines them) and tagged for scoring
    credit.
    """
    flags = meas.dnoc_flags(slice_)
    credited: list[tuple[int, int]] = []
    kept: list[tuple[int, int]] = []
    for cell_key in masks.cells:
        cell = slice_.cell(*cell_key)
        if cell.notes and len({n.pitch for n in cell.notes}) == 1:
            credited.append(cell_key)
        else:
            kept.append(cell_key)

    conditioning = {c: COND_2D for c in kept}
    per_cell: dict[tuple[int, int], set[str]] = {}
    for cell_key in kept:
        cell = slice_.cell(*cell_key)
        fams: set[str] = set()
        if not cell.is_empty:
            fams.add("range_strict")
            if flags[cell_key[0]][cell_key[1]]:
                fams.add("dnoc")
        if fams:
            per_cell[cell_key] = fams

    per_track: dict[int, set[str]] = {}
    for t in sorted({c[0] for c in kept}):
        track_cells = [slice_.cell(*c) for c in kept if c[0] == t]
        if len(meas.chords(track_cells)) >= 2:
            per_track[t] = {"step", "leap"}

    new_masks = MaskSpec.build(kept, conditioning)
    controls = ControlSpec.build(per_track=per_track, per_cell=per_cell)
    return _finalize(slice_, new_masks, controls, task=task, source=source,
                     seed=seed, example_id=example_id, auto_credited=credited,
                     truth_cells=list(masks.cells))


_TRACK_FAMILY_ORDER = ("horiz", "interest", "vert", "pcs", "step", "leap",
                       "range_strict", "range_loose")
_CELL_FAMILY_ORDER = ("horiz", "vert", "pcs", "dnoc", "range_strict")


def _defined_track_families(cells) -> set[str]:
    defined = {"horiz", "interest"}
    if any(not c.is_empty for c in cells):
        defined |= {"vert", "pcs", "range_strict", "range_loose"}
    if len(meas.chords(cells)) >= 2:
        defined |= {"step", "leap"}
    return defined


def sample_training_example(score: QuantizedScore, seed: int, *,
                            source: str = "", example_id: str = "",
                            config: GenConfig = DEFAULT_CONFIG) -> InfillExample:
    """One training example: random slice, random non-empty mask set, random
    control subset, random conditioning modes."""
    if not any(tr.notes for tr in score.tracks):
        raise TrackfillError("score contains no notes")
    rng = _rng(seed)
    n_measures = score.num_measures
    slice_ = None
    for _ in range(64):
        length = int(rng.integers(1, min(config.max_slice_measures, n_measures) + 1))
        start = int(rng.integers(0, n_measures - length + 1))
        candidate = score.slice(start, length)
        if any(not c.is_empty for c in candidate.iter_cells()):
            slice_ = candidate
            break
    if slice_ is None:
        first_onset = min(n.onset for tr in score.tracks for n in tr.notes)
        start = score.measure_map.index_of(first_onset)
        slice_ = score.slice(start, 1)

    cells = [(t, m) for t in range(slice_.num_tracks) for m in range(slice_.num_measures)]
    rate = rng.uniform(config.min_train_mask_rate, config.max_train_mask_rate)
    chosen = [c for c in cells if rng.random() < rate]
    if not chosen:
        chosen = [cells[int(rng.integers(len(cells)))]]
    if len(chosen) > tk.MAX_MASKS:
        chosen = chosen[: tk.MAX_MASKS]

    modes = ("none", "1d", "2d")
    conditioning = {}
    for cell_key in chosen:
        mode = modes[int(rng.choice(3, p=config.conditioning_probs))]
        if mode != "none":
            conditioning[cell_key] = mode
    masks = MaskSpec.build(chosen, conditioning)

    flags = meas.dnoc_flags(slice_)
    per_cell: dict[tuple[int, int], set[str]] = {}
    for cell_key in masks.cells:
        cell = slice_.cell(*cell_key)
        defined = {"horiz"}
        if not cell.is_empty:
            defined |= {"vert", "pcs", "range_strict"}
            if flags[cell_key[0]][cell_key[1]]:
                defined.add("dnoc")
        fams = {f for f in _CELL_FAMILY_ORDER
                if f in defined and rng.random() < config.control_probability}
        if fams:
            per_cell[cell_key] = fams

    per_track: dict[int, set[str]] = {}
    for t in sorted({c[0] for c in masks.cells}):
        track_cells = [slice_.cell(*c) for c in masks.cells if c[0] == t]
        defined = _defined_track_families(track_cells)
        fams = {f for f in _TRACK_FAMILY_ORDER
                if f in defined and rng.random() < config.control_probability}
        if fams:
            per_track[t] = fams

    controls = ControlSpec.build(per_track=per_track, per_cell=per_cell)
    return _finalize(slice_, masks, controls, task="train", source=source,
                     seed=seed, example_id=example_id)


def pick_test_slices(score: QuantizedScore, seed: int,
                     config: GenConfig = DEFAULT_CONFIG) -> list[int]:
    """Up to `slices_per_file` non-overlapping 8-measure slice starts, seeded."""
    n = score.num_measures
    if n < TEST_SLICE_MEASURES:
        return []
    starts = list(_rng(seed).permutation(n - TEST_SLICE_MEASURES + 1))
    chosen: list[int] = []
    for start in starts:
        start = int(start)
        if len(chosen) >= config.slices_per_file:
            break
        if all(abs(start - c) >= TEST_SLICE_MEASURES for c in chosen):
            chosen.append(start)
    return sorted(chosen)


def write_jsonl(examples: Iterable[InfillExample], path: str | Path) -> int:
    path = Path(path)
    count = 0
    with path.open("w", encoding="utf-8") as fh:
        for example in examples:
            fh.write(json.dumps(example.to_dict(), separators=(",", ":")) + "\n")
            count += 1
    return count


def read_jsonl(path: str | Path) -> list[InfillExample]:
    out = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(InfillExample.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise TrackfillError(f"{path}:{lineno}: malformed example line: {exc}") from exc
    return out


@dataclass
class DatasetManifest:
    task: str
    seed: int
    requested: int
    produced: int
    files_scanned: int
    corpus_fingerprint: str
    skips: dict[str, int] = field(default_factory=dict)
    masked_cells: int = 0
    auto_credited_cells: int = 0
    config: dict = field(default_factory=dict)

    @property
    def auto_credited_fraction(self) -> float:
        total = self.masked_cells + self.auto_credited_cells
        return self.auto_credited_cells / total if total else 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["auto_credited_fraction"] = self.auto_credited_fraction
        return d


def corpus_fingerprint(paths: Iterable[Path]) -> str:
    digest = hashlib.sha256()
    for path in sorted(paths):
        digest.update(path.name.encode())
        digest.update(hashlib.sha256(path.read_bytes()).digest())
    return digest.hexdigest()
