"""Command-line interface.

Exit codes: 0 success, 1 partial (some inputs were skipped), 2 failure.
Failures print a machine-readable JSON reason on stderr. All subcommands are
deterministic given their inputs and --seed; --jobs only changes wall time,
never output bytes.
"""

from __future__ import annotations

import csv
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path

import click

from . import encoding as enc
from . import examples as ex
from . import measurements as meas
from . import metrics as mx
from . import tokens as tk
from .errors import DecodeError, TrackfillError
from .ingest import IngestDiagnostics, load_score
from .score import MeasureSlice, Note, QuantizedScore, TrackMeasure
from .smf import write_smf


def _fail(message: str, kind: str = "error", **extra):
    payload = {"error": kind, "message": message, **extra}
    print(json.dumps(payload), file=sys.stderr)
    sys.exit(2)


@click.group()
@click.option("--seed", type=int, default=0, show_default=True,
              help="Global RNG seed; all sampling derives from it.")
@click.option("--jobs", type=int, default=1, show_default=True,
              help="File-level parallelism where supported.")
@click.pass_context
def main(ctx, seed: int, jobs: int):
    """Multi-track MIDI infilling toolkit."""
    ctx.ensure_object(dict)
    ctx.obj["seed"] = seed
    ctx.obj["jobs"] = max(1, jobs)


def _measurement_entry(fn, cells):
    try:
        m = fn(cells)
    except TrackfillError:
        return None
    return {"value": m.value, "bin": m.bin, "label": m.label}


def _cells_report(cells) -> dict:
    report = {
        meas.HORIZONTAL_DENSITY: _measurement_entry(meas.horizontal_density, cells),
        meas.RHYTHMIC_INTEREST: _measurement_entry(meas.rhythmic_interest, cells),
        meas.VERTICAL_DENSITY: _measurement_entry(meas.vertical_density, cells),
        meas.PITCH_CLASSES_PER_ONSET: _measurement_entry(meas.pitch_classes_per_onset, cells),
    }
    try:
        step_m, leap_m = meas.step_leap_propensity(cells)
        report[meas.STEP_PROPENSITY] = {"value": step_m.value, "bin": step_m.bin,
                                        "label": step_m.label}
        report[meas.LEAP_PROPENSITY] = {"value": leap_m.value, "bin": leap_m.bin,
                                        "label": leap_m.label}
    except TrackfillError:
        report[meas.STEP_PROPENSITY] = None
        report[meas.LEAP_PROPENSITY] = None
    return report


def analyze_report(score: QuantizedScore, *, per_measure: bool = False,
                   file_name: str = "") -> dict:
    slice_ = score.slice(0, score.num_measures)
    flags = meas.dnoc_flags(slice_)
    tracks = []
    for t, track in enumerate(score.tracks):
        cells = slice_.track_cells(t)
        try:
            rng = meas.pitch_range(cells)
            pitch_range = [rng.low, rng.high]
        except TrackfillError:
            pitch_range = None
        entry = {
            "index": t,
            "instrument": track.instrument,
            "name": track.name,
            "is_drum": track.is_drum,
            "measurements": _cells_report(cells),
            "pitch_range": pitch_range,
            "dnoc_flags": flags[t],
        }
        if per_measure:
            detail = []
            for m in range(slice_.num_measures):
                cell = slice_.cell(t, m)
                cell_report = _cells_report([cell])
                try:
                    rng = meas.pitch_range([cell])
                    cell_range = [rng.low, rng.high]
                except TrackfillError:
                    cell_range = None
                detail.append({
                    "measure": m,
                    "measurements": cell_report,
                    "pitch_range": cell_range,
                    "chromagram": sorted(map(list, meas.chromagram(cell))),
                })
            entry["per_measure"] = detail
        tracks.append(entry)
    return {
        "file": file_name,
        "num_measures": score.num_measures,
        "measures": [[score.measure_map.start(i), score.measure_map.lengths[i]]
                     for i in range(score.num_measures)],
        "tracks": tracks,
    }


@main.command()
@click.argument("midi_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--per-measure", is_flag=True, help="Add per-track-measure detail.")
@click.option("--diagnostics", "show_diagnostics", is_flag=True,
              help="Include merge/snap diagnostics from ingest.")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def analyze(midi_path, per_measure, show_diagnostics, out):
    """Report every measurement (value, bin, label) for a MIDI file."""
    diagnostics = IngestDiagnostics()
    try:
        score = load_score(Path(midi_path), diagnostics)
    except TrackfillError as exc:
        _fail(str(exc), kind=type(exc).__name__)
    report = analyze_report(score, per_measure=per_measure, file_name=Path(midi_path).name)
    if show_diagnostics:
        report["ingest_diagnostics"] = diagnostics.report().splitlines()
    text = json.dumps(report, indent=2)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    else:
        click.echo(text)


def _collect_corpus(corpus_dir: Path) -> list[Path]:
    files = [p for p in corpus_dir.rglob("*")
             if p.is_file() and p.suffix.lower() in (".mid", ".midi")]
    return sorted(files, key=lambda p: str(p.relative_to(corpus_dir)))


_TEST_BUILDERS = {
    "random": ex.build_random_infill,
    "track": ex.build_track_infill,
    "lastbar": ex.build_last_bar,
}


def _dataset_worker(args) -> dict:
    (path_str, rel, task, seed, per_file, max_controls, config_kwargs) = args
    config = ex.GenConfig(**config_kwargs)
    out = {"examples": [], "skips": [], "rel": rel}
    try:
        score = load_score(Path(path_str))
    except TrackfillError as exc:
        out["skips"].append(f"rejected:{type(exc).__name__}")
        return out
    if task == "train":
        for j in range(per_file):
            seed_j = ex.derive_seed(seed, rel, "train", j)
            try:
                example = ex.sample_training_example(
                    score, seed_j, source=rel,
                    example_id=f"{rel}#train{j}", config=config)
                out["examples"].append(example.to_dict())
            except TrackfillError as exc:
                out["skips"].append(f"train:{exc}")
        return out
    builder = _TEST_BUILDERS[task]
    starts = ex.pick_test_slices(score, ex.derive_seed(seed, rel, "slices"), config)
    if not starts:
        out["skips"].append("too_short")
        return out
    for start in starts:
        slice_ = score.slice(start, ex.TEST_SLICE_MEASURES)
        seed_s = ex.derive_seed(seed, rel, start, task)
        try:
            example = builder(slice_, seed_s, source=rel,
                              example_id=f"{rel}#{start}:{task}",
                              config=config, max_controls=max_controls)
            out["examples"].append(example.to_dict())
        except ex.SkipSlice as exc:
            out["skips"].append(f"{task}:{exc.reason}")
    return out


@main.command("make-dataset")
@click.argument("corpus_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--task", type=click.Choice(["train", "random", "track", "lastbar"]),
              required=True)
@click.option("--n", type=int, required=True, help="Maximum number of examples.")
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.option("--max-controls", is_flag=True,
              help="Supply every applicable control, with single-pitch auto-credit.")
@click.option("--mask-probability", type=float, default=0.5, show_default=True)
@click.option("--control-probability", type=float, default=0.5, show_default=True)
@click.option("--conditioning-probs", type=(float, float, float),
              default=(0.5, 0.25, 0.25), show_default=True,
              help="Training probabilities for none/1D/2D conditioning.")
@click.pass_context
def make_dataset(ctx, corpus_dir, task, n, out, max_controls,
                 mask_probability, control_probability, conditioning_probs):
    """Build an infilling dataset (JSONL plus manifest) from a MIDI corpus."""
    seed = ctx.obj["seed"]
    jobs = ctx.obj["jobs"]
    corpus = Path(corpus_dir)
    files = _collect_corpus(corpus)
    if not files:
        _fail(f"no MIDI files under {corpus}", kind="EmptyCorpus")
    try:
        config = ex.GenConfig(mask_probability=mask_probability,
                              control_probability=control_probability,
                              conditioning_probs=tuple(conditioning_probs))
    except ValueError as exc:
        _fail(str(exc), kind="BadConfig")
    config_kwargs = asdict(config)

    per_file = -(-n // len(files)) if task == "train" else 0  # ceil
    work = [(str(p), str(p.relative_to(corpus)), task, seed, per_file,
             max_controls, config_kwargs) for p in files]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_dataset_worker, work))
    else:
        results = [_dataset_worker(w) for w in work]

    examples: list[dict] = []
    skips: dict[str, int] = {}
    masked_cells = 0
    credited_cells = 0
    for result in results:
        for reason in result["skips"]:
            skips[reason] = skips.get(reason, 0) + 1
        for d in result["examples"]:
            if len(examples) >= n:
                break
            examples.append(d)
            masked_cells += len(d["masks"])
            credited_cells += len(d["auto_credited"])

    manifest = ex.DatasetManifest(
        task=task, seed=seed, requested=n, produced=len(examples),
        files_scanned=len(files), corpus_fingerprint=ex.corpus_fingerprint(files),
        skips=skips, masked_cells=masked_cells, auto_credited_cells=credited_cells,
        config=config_kwargs,
    )
    if not examples:
        _fail("no examples could be produced", kind="EmptyDataset",
              manifest=manifest.to_dict())
    out_path = Path(out)
    with out_path.open("w", encoding="utf-8") as fh:
        for d in examples:
            fh.write(json.dumps(d, separators=(",", ":")) + "\n")
    manifest_path = out_path.with_suffix(out_path.suffix + ".manifest.json")
    manifest_path.write_text(json.dumps(manifest.to_dict(), indent=2) + "\n",
                             encoding="utf-8")
    click.echo(f"wrote {len(examples)} examples to {out_path}")
    if skips:
        print(json.dumps({"warning": "some inputs were skipped", "skips": skips}),
              file=sys.stderr)
        sys.exit(1)


def _decoded_records(example: ex.InfillExample, target_ids) -> tuple[list, bool]:
    """Decode an output id sequence into (track, measure, pitch, onset, duration)
    records, salvaging complete fill blocks from invalid streams."""
    masks = example.mask_spec()
    result, grammatical = enc.decode_salvage(tk.from_ids(target_ids), masks,
                                             example.measure_lengths)
    records = []
    for (t, m), notes in result.notes.items():
        records.extend((t, m, n.pitch, n.onset, n.duration) for n in notes)
    return records, grammatical and result.complete


def score_example(example: ex.InfillExample, target_ids) -> dict:
    predicted, valid = _decoded_records(example, target_ids)
    credited = set(map(tuple, example.auto_credited))
    truth = [tuple(g) for g in example.ground_truth]
    report = mx.note_prf(truth, predicted, credited)

    credited_truth = [g for g in truth if (g[0], g[1]) in credited]
    predicted_full = predicted + credited_truth
    entropy = mx.pch_entropy_difference((g[2] for g in truth),
                                        (p[2] for p in predicted_full))

    cells = {}
    for t, m in list(map(tuple, example.masks)) + sorted(credited):
        cells[(t, m)] = (example.measure_lengths[m], set(), set())
    for g in truth:
        if (g[0], g[1]) in cells:
            cells[(g[0], g[1])][1].add(g[3])
    for p in predicted_full:
        if (p[0], p[1]) in cells:
            cells[(p[0], p[1])][2].add(p[3])
    groove = mx.groove_similarity(
        (length, t_onsets, p_onsets) for length, t_onsets, p_onsets in cells.values())

    return {
        "id": example.id,
        "task": example.task,
        "precision": report.precision,
        "recall": report.recall,
        "f1": report.f1,
        "entropy_difference": entropy,
        "groove_similarity": groove,
        "valid": valid,
    }


EVAL_CSV_HEADER = ("id,task,precision,recall,f1,entropy_difference,"
                   "groove_similarity,valid")


@main.command("eval")
@click.argument("examples_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("outputs_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out-dir", type=click.Path(file_okay=False), default="eval-report",
              show_default=True)
def eval_cmd(examples_path, outputs_path, out_dir):
    """Score model outputs (JSONL keyed by example id) against ground truth."""
    try:
        examples = ex.read_jsonl(examples_path)
    except TrackfillError as exc:
        _fail(str(exc), kind="BadExamples")
    outputs = {}
    with open(outputs_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                outputs[record["id"]] = record["target_ids"]
            except (json.JSONDecodeError, KeyError) as exc:
                _fail(f"{outputs_path}:{lineno}: malformed output line: {exc}",
                      kind="BadOutputs")
    missing = [e.id for e in examples if e.id not in outputs]
    if missing:
        _fail("outputs are missing example ids", kind="MissingIds", missing=missing)

    rows = [score_example(e, outputs[e.id]) for e in examples]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "per_example.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(EVAL_CSV_HEADER.split(","))
        for row in rows:
            writer.writerow([row["id"], row["task"], f"{row['precision']:.6f}",
                             f"{row['recall']:.6f}", f"{row['f1']:.6f}",
                             f"{row['entropy_difference']:.6f}",
                             f"{row['groove_similarity']:.6f}", int(row["valid"])])
    arrays = {key: [row[key] for row in rows]
              for key in ("precision", "recall", "f1", "entropy_difference",
                          "groove_similarity")}
    summary = {
        "examples": len(rows),
        "invalid_outputs": sum(1 for row in rows if not row["valid"]),
        "mean": {key: (sum(values) / len(values) if values else 0.0)
                 for key, values in arrays.items()},
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n",
                                      encoding="utf-8")
    (out / "paired_samples.json").write_text(
        json.dumps({"ids": [row["id"] for row in rows], **arrays}) + "\n",
        encoding="utf-8")
    click.echo(json.dumps(summary["mean"], indent=2))


def _cells_from_records(records, measure_lengths) -> list[TrackMeasure]:
    grouped: dict[tuple[int, int], list[Note]] = {}
    for t, m, pitch, onset, duration in records:
        grouped.setdefault((t, m), []).append(Note(pitch, onset, duration))
    return [
        TrackMeasure(t, m, measure_lengths[m], tuple(grouped[(t, m)]))
        for (t, m) in sorted(grouped)
    ]


@main.command()
@click.argument("outputs_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--tolerance", type=click.Choice(["0", "1"]), default="1",
              show_default=True, help="Bin tolerance for the stdout summary.")
@click.option("--out", type=click.Path(dir_okay=False), required=True,
              help="Success-rate CSV path.")
def comply(outputs_path, tolerance, out):
    """Check control compliance over self-contained output records.

    Each input line carries: id, control (token text or null), target_ids,
    masks, measure_lengths, and optional context_notes.
    """
    tolerance = int(tolerance)
    samples = []
    with open(outputs_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                masks = enc.MaskSpec.build([tuple(c) for c in record["masks"]])
                lengths = record["measure_lengths"]
                result, _ = enc.decode_salvage(tk.from_ids(record["target_ids"]),
                                               masks, lengths)
                output_records = []
                for (t, m), notes in result.notes.items():
                    output_records.extend(
                        (t, m, n.pitch, n.onset, n.duration) for n in notes)
                output_cells = _cells_from_records(output_records, lengths)
                if not output_cells:  # keep empty outputs visible to the checker
                    output_cells = [TrackMeasure(t, m, lengths[m], ())
                                    for t, m in masks.cells]
                context_cells = _cells_from_records(
                    [tuple(r) for r in record.get("context_notes", [])], lengths)
                control = (tuple(tk.parse_text(record["control"]))
                           if record.get("control") else None)
            except (TrackfillError, KeyError, IndexError, TypeError) as exc:
                _fail(f"{outputs_path}:{lineno}: bad compliance record: {exc}",
                      kind="BadOutputs")
            samples.append((mx.ComplianceSample(output_cells, context_cells), control))

    rows = mx.success_rate_report(samples)
    with Path(out).open("w", encoding="utf-8") as fh:
        fh.write(mx.SUCCESS_RATE_HEADER + "\n")
        for row in rows:
            fh.write(row.csv() + "\n")
    summary = {
        row.control: (row.one_bin_rate_conditioned if tolerance
                      else row.exact_rate_conditioned)
        for row in rows
    }
    click.echo(json.dumps(summary, indent=2))


def _load_maskspec(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


@main.command()
@click.argument("midi_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--maskspec", type=click.Path(exists=True, dir_okay=False), default=None,
              help="JSON mask/control specification (see docs/formats.md).")
@click.option("--start", type=int, default=None, help="Slice start measure.")
@click.option("--measures", type=int, default=None, help="Slice length in measures.")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def tokenize(midi_path, maskspec, start, measures, out):
    """Encode a MIDI slice into prompt/target token text and ids (JSON)."""
    spec = _load_maskspec(maskspec)
    try:
        score = load_score(Path(midi_path))
        slice_start = start if start is not None else spec.get("start", 0)
        slice_len = measures if measures is not None else spec.get(
            "measures", score.num_measures - slice_start)
        slice_ = score.slice(slice_start, slice_len)
        masks = enc.MaskSpec.build(
            [tuple(c) for c in spec.get("masks", [])],
            {(t, m): mode for t, m, mode in spec.get("conditioning", [])},
        )
        controls_spec = spec.get("controls", {})
        controls = enc.ControlSpec.build(
            per_track={int(t): frozenset(f)
                       for t, f in controls_spec.get("track", {}).items()},
            per_cell={(t, m): frozenset(f)
                      for t, m, f in controls_spec.get("cell", [])},
        )
        pair = enc.encode(slice_, masks, controls)
    except (TrackfillError, ValueError) as exc:
        _fail(str(exc), kind=type(exc).__name__)
    payload = {
        "prompt_text": tk.render_text(pair.prompt),
        "target_text": tk.render_text(pair.target),
        "prompt_ids": tk.to_ids(pair.prompt),
        "target_ids": tk.to_ids(pair.target),
        "measure_lengths": list(slice_.measure_lengths),
        "masks": [list(c) for c in masks.cells],
    }
    text = json.dumps(payload, indent=2)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    else:
        click.echo(text)


@main.command()
@click.argument("tokens_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--target", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Optional target token text merged into the masked cells.")
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def detokenize(tokens_path, target, out):
    """Write prompt-format token text back to a playable MIDI file (24 PPQ)."""
    try:
        prompt = tk.parse_text(Path(tokens_path).read_text(encoding="utf-8"))
        target_tokens = (tk.parse_text(Path(target).read_text(encoding="utf-8"))
                         if target else None)
        score = enc.score_from_prompt(prompt, target_tokens)
    except TrackfillError as exc:
        _fail(str(exc), kind=type(exc).__name__)
    Path(out).write_bytes(write_smf(score))
    click.echo(f"wrote {out}")


@main.command()
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def vocab(out):
    """Dump the token vocabulary with ids, families, and the target grammar."""
    tokens = []
    for i, token in enumerate(tk.vocabulary()):
        tokens.append({"id": i, "text": tk.render(token), "family": token.family,
                       "a": token.a, "b": token.b})
    payload = {
        "size": tk.vocab_size(),
        "hash": tk.vocab_hash(),
        "tokens": tokens,
        "target_grammar": {
            "start": ["fill", "eot"],
            "after_fill": ["pos", "fill", "eot"],
            "after_pos": ["non"],
            "after_non": ["dur"],
            "after_dur": ["non", "pos", "fill", "eot"],
            "notes": "fill indices ascend; positions ascend within a block and "
                     "stay below the masked cell's measure length",
        },
    }
    text = json.dumps(payload)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    else:
        click.echo(text)


if __name__ == "__main__":
    main()
