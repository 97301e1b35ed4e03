from __future__ import annotations

import json

from tinyfill.probe import ProbeSpec, dnoc_prompt, empty_prompt, run_probe, write_records


def test_empty_prompt_shape(vocab):
    ids, lengths = empty_prompt(vocab, "<horiz:1>", measures=2)
    text = vocab.text(ids)
    assert text == ("<inst:0> <mlen:96> <mask:0> <msep> <mlen:96> <mask:1> "
                    "<track:0> <horiz:1>")
    assert lengths == [96, 96]


def test_empty_prompt_unconditioned(vocab):
    ids, _ = empty_prompt(vocab, None)
    assert vocab.text(ids) == "<inst:0> <mlen:96> <mask:0>"


def test_dnoc_prompt_is_octave_ostinato(vocab):
    ids, lengths, context = dnoc_prompt(vocab, with_token=True)
    text = vocab.text(ids)
    assert text.endswith("<mask:0> <dnoc>")
    assert lengths == [96]
    top = [(p, o) for t, m, p, o, d in context if t == 0]
    bottom = [(p, o) for t, m, p, o, d in context if t == 1]
    assert [(p - 12, o) for p, o in top] == bottom  # one octave apart
    # both context tracks appear in the prompt
    for pitch, onset in top + bottom:
        assert f"<non:{pitch}>" in text


def test_probe_records_schema(overfit_model, vocab, tmp_path):
    model, _, _ = overfit_model
    records = run_probe(model, vocab, ProbeSpec(control="<vert:0>", sample_count=3),
                        seed=5, batch_size=2)
    assert len(records) == 3
    path = write_records(records, tmp_path / "records.jsonl")
    loaded = [json.loads(line) for line in path.read_text().splitlines()]
    for record in loaded:
        assert record["control"] == "<vert:0>"
        assert record["masks"] == [[0, 0]]
        assert record["measure_lengths"] == [96]
        assert isinstance(record["target_ids"], list)
