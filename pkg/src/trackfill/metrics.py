"""Scoring of model outputs: note precision/recall/F1, pitch-class-histogram
entropy difference, groove similarity, and control-compliance checking.

Note identity for matching is (track, measure, pitch, onset); the duration-
inclusive variant is a one-line switch in `note_key`.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from . import measurements as meas
from . import tokens as tk
from .encoding import satisfies_loose_range, satisfies_strict_range
from .errors import TrackfillError, UndefinedMeasurementError
from .score import Note, TrackMeasure
from .tokens import Tok

MATCH_ON_DURATION = False

NoteRecord = tuple[int, int, int, int, int]  # (track, measure, pitch, onset, duration)


def note_key(record: NoteRecord) -> tuple:
    track, measure, pitch, onset, duration = record
    if MATCH_ON_DURATION:
        return (track, measure, pitch, onset, duration)
    return (track, measure, pitch, onset)


@dataclass(frozen=True)
class NoteMatchReport:
    true_positives: int
    predicted_count: int
    truth_count: int
    precision: float
    recall: float
    f1: float


def _safe_ratio(num: int, denom: int) -> float:
    return num / denom if denom else 1.0


def note_prf(truth: Iterable[NoteRecord], predicted: Iterable[NoteRecord],
             auto_credited: Iterable[tuple[int, int]] = ()) -> NoteMatchReport:
    """One-to-one matching on note identity. Auto-credited cells contribute
    their ground-truth notes as both predicted and matched."""
    credited = set(tuple(c) for c in auto_credited)
    truth = list(truth)
    truth_keys = {note_key(r) for r in truth}
    predicted_keys = [note_key(r) for r in predicted]
    predicted_keys.extend(note_key(r) for r in truth if (r[0], r[1]) in credited)

    matched = set()
    tp = 0
    for key in predicted_keys:
        if key in truth_keys and key not in matched:
            matched.add(key)
            tp += 1
    precision = _safe_ratio(tp, len(predicted_keys))
    recall = _safe_ratio(tp, len(truth_keys))
    f1 = (2 * precision * recall / (precision + recall)) if precision + recall else 0.0
    return NoteMatchReport(tp, len(predicted_keys), len(truth_keys), precision, recall, f1)


def _entropy12(pitches: Iterable[int]) -> float:
    counts = Counter(p % 12 for p in pitches)
    total = sum(counts.values())
    if total == 0:
        return 0.0
    return -sum((c / total) * math.log2(c / total) for c in counts.values())


def pch_entropy_difference(truth_pitches: Iterable[int],
                           predicted_pitches: Iterable[int]) -> float:
    """Absolute difference of 12-bin pitch-class-histogram entropies,
    normalized by log2(12) and reported as a percentage."""
    diff = abs(_entropy12(truth_pitches) - _entropy12(predicted_pitches))
    return 100.0 * diff / math.log2(12)


def groove_similarity(cells: Iterable[tuple[int, Iterable[int], Iterable[int]]]) -> float:
    """Mean per-cell binary-onset-vector agreement, as a percentage.

    Each item is (measure length, truth onset ticks, predicted onset ticks).
    """
    sims = []
    for length, truth_onsets, predicted_onsets in cells:
        hamming = len(set(truth_onsets) ^ set(predicted_onsets))
        sims.append(1.0 - hamming / length)
    if not sims:
        return 100.0
    return 100.0 * sum(sims) / len(sims)


BINNED_CONTROL_FAMILIES = {
    tk.HORIZ: meas.HORIZONTAL_DENSITY,
    tk.INTEREST: meas.RHYTHMIC_INTEREST,
    tk.VERT: meas.VERTICAL_DENSITY,
    tk.PCS: meas.PITCH_CLASSES_PER_ONSET,
    tk.STEP: meas.STEP_PROPENSITY,
    tk.LEAP: meas.LEAP_PROPENSITY,
}


def binned_control_tokens() -> list[Tok]:
    """Every binned control token plus the distinct-chromagram token (34 total)."""
    out = []
    for family, kind in BINNED_CONTROL_FAMILIES.items():
        out.extend(tk.make(family, b) for b in range(meas.BIN_COUNTS[kind]))
    out.append(tk.DNOC_TOKEN)
    return out


@dataclass(frozen=True)
class ComplianceResult:
    control: str
    observed_value: float | None
    target_bin: int | None
    observed_bin: int | None
    satisfied: bool                 # exact-bin verdict
    satisfied_within_one_bin: bool
    tolerance: int = 0
    reason: str | None = None

    @property
    def verdict(self) -> bool:
        """The verdict at the tolerance the check was run with."""
        return self.satisfied_within_one_bin if self.tolerance else self.satisfied


@dataclass
class ComplianceSample:
    """A generated output plus the context needed to judge one control.

    `output_cells` hold the generated notes; `context_cells` hold the
    unmasked surrounding content (needed for the distinct-chromagram check).
    """

    output_cells: list[TrackMeasure]
    context_cells: list[TrackMeasure] = None  # type: ignore[assignment]

    def __post_init__(self):
        if self.context_cells is None:
            self.context_cells = []


def _measure_for_family(family: str, cells: Sequence[TrackMeasure]) -> meas.Measurement:
    kind = BINNED_CONTROL_FAMILIES[family]
    fn = {
        meas.HORIZONTAL_DENSITY: meas.horizontal_density,
        meas.RHYTHMIC_INTEREST: meas.rhythmic_interest,
        meas.VERTICAL_DENSITY: meas.vertical_density,
        meas.PITCH_CLASSES_PER_ONSET: meas.pitch_classes_per_onset,
    }.get(kind)
    if fn is not None:
        return fn(cells)
    step_m, leap_m = meas.step_leap_propensity(cells)
    return step_m if kind == meas.STEP_PROPENSITY else leap_m


def check_compliance(sample: ComplianceSample, control: Sequence[Tok],
                     tolerance: int = 0) -> ComplianceResult:
    """Recompute the controlled measurement on the output and compare bins.

    `control` is the control token plus any value tokens it carries (range
    controls are followed by note-on tokens). `tolerance` 1 accepts an
    observed bin one away from the target.
    """
    if not control:
        raise TrackfillError("empty control token sequence")
    head = control[0]
    spelling = tk.render_text(control)

    if head.family in BINNED_CONTROL_FAMILIES:
        try:
            observed = _measure_for_family(head.family, sample.output_cells)
        except UndefinedMeasurementError as exc:
            return ComplianceResult(spelling, None, head.a, None, False, False,
                                    tolerance, reason=f"undefined: {exc}")
        exact = observed.bin == head.a
        within = abs(observed.bin - head.a) <= 1
        return ComplianceResult(spelling, observed.value, head.a, observed.bin,
                                exact, within, tolerance)

    if head.family == tk.DNOC:
        chroma = _merged_chromagram(sample.output_cells)
        if not chroma:
            return ComplianceResult(spelling, None, None, None, False, False,
                                    tolerance, reason="undefined: empty output")
        others = [_merged_chromagram([c]) for c in sample.context_cells
                  if not c.is_empty]
        ok = all(chroma != other for other in others)
        return ComplianceResult(spelling, None, None, None, ok, ok, tolerance)

    if head.family in (tk.LO_STRICT, tk.LO_LOOSE):
        low, high, loose = _parse_range_control(control)
        pitches = [n.pitch for c in sample.output_cells for n in c.notes]
        ok = (satisfies_loose_range(pitches, low, high) if loose
              else satisfies_strict_range(pitches, low, high))
        return ComplianceResult(spelling, None, None, None, ok, ok, tolerance)

    raise TrackfillError(f"unknown control token {tk.render(head)}")


def _merged_chromagram(cells: Sequence[TrackMeasure]) -> frozenset:
    out = set()
    for cell in cells:
        out |= meas.chromagram(cell)
    return frozenset(out)


def _parse_range_control(control: Sequence[Tok]) -> tuple[int, int, bool]:
    if (len(control) != 4 or control[1].family != tk.NOTE_ON
            or control[3].family != tk.NOTE_ON):
        raise TrackfillError(
            "range control must be <lo-*> <non:x> <hi-*> <non:y>")
    loose = control[0].family == tk.LO_LOOSE
    expected_hi = tk.HI_LOOSE if loose else tk.HI_STRICT
    if control[2].family != expected_hi:
        raise TrackfillError("mismatched strict/loose range token pair")
    return control[1].a, control[3].a, loose


SUCCESS_RATE_HEADER = ("control,n_conditioned,exact_rate_conditioned,"
                       "one_bin_rate_conditioned,n_unconditioned,"
                       "exact_rate_unconditioned,one_bin_rate_unconditioned")


@dataclass(frozen=True)
class SuccessRateRow:
    control: str
    n_conditioned: int
    exact_rate_conditioned: float
    one_bin_rate_conditioned: float
    n_unconditioned: int
    exact_rate_unconditioned: float
    one_bin_rate_unconditioned: float

    def csv(self) -> str:
        return (f"{self.control},{self.n_conditioned},"
                f"{self.exact_rate_conditioned:.6f},{self.one_bin_rate_conditioned:.6f},"
                f"{self.n_unconditioned},"
                f"{self.exact_rate_unconditioned:.6f},{self.one_bin_rate_unconditioned:.6f}")


def success_rate_report(
    samples: Sequence[tuple[ComplianceSample, Sequence[Tok] | None]],
) -> list[SuccessRateRow]:
    """Per control token: P(output satisfies it | token supplied) versus
    P(satisfies | unconditioned), exact and with one-bin tolerance."""
    unconditioned = [s for s, control in samples if control is None]
    by_control: dict[str, tuple[Sequence[Tok], list[ComplianceSample]]] = {}
    for sample, control in samples:
        if control is None:
            continue
        spelling = tk.render_text(control)
        by_control.setdefault(spelling, (tuple(control), []))[1].append(sample)

    rows = []
    for spelling in sorted(by_control):
        control, conditioned = by_control[spelling]

        def rates(group: list[ComplianceSample]) -> tuple[float, float]:
            if not group:
                return 0.0, 0.0
            results = [check_compliance(s, control, tolerance=1) for s in group]
            exact = sum(r.satisfied for r in results) / len(results)
            within = sum(r.satisfied_within_one_bin for r in results) / len(results)
            return exact, within

        exact_c, within_c = rates(conditioned)
        exact_u, within_u = rates(unconditioned)
        rows.append(SuccessRateRow(spelling, len(conditioned), exact_c, within_c,
                                   len(unconditioned), exact_u, within_u))
    return rows
