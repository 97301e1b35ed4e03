"""Trainer CLI: corpus synthesis, training, generation, and control probes."""

from __future__ import annotations

import json
from pathlib import Path

import click

from . import corpus, probe, toolkit
from .data import load_examples
from .model import ModelConfig
from .sample import generate
from .train import TrainConfig, load_checkpoint, train
from .vocab import load_vocab


@click.group()
def main():
    """Desk-scale infilling model for the trackfill token language."""


@main.command("make-corpus")
@click.option("--out", type=click.Path(file_okay=False), required=True)
@click.option("--n", type=int, default=240, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def make_corpus(out, n, seed):
    """Write synthetic MIDI files via the toolkit's detokenizer."""
    paths = corpus.build_corpus(Path(out), n, seed=seed)
    click.echo(f"wrote {len(paths)} files to {out}")


@main.command("train")
@click.argument("dataset", type=click.Path(exists=True, dir_okay=False))
@click.option("--vocab", "vocab_path", type=click.Path(exists=True, dir_okay=False),
              required=True, help="trackfill vocab dump (pins the id space).")
@click.option("--out-dir", type=click.Path(file_okay=False), required=True)
@click.option("--epochs", type=int, default=10, show_default=True)
@click.option("--batch-size", type=int, default=32, show_default=True)
@click.option("--lr", type=float, default=3e-4, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--d-model", type=int, default=128, show_default=True)
@click.option("--layers", type=int, default=2, show_default=True,
              help="Encoder and decoder layer count.")
@click.option("--max-len", type=int, default=512, show_default=True)
def train_cmd(dataset, vocab_path, out_dir, epochs, batch_size, lr, seed,
              d_model, layers, max_len):
    """Train on a toolkit-generated JSONL dataset."""
    vocab = load_vocab(vocab_path)
    examples, dropped = load_examples(dataset, max_src=max_len, max_tgt=max_len,
                                      vocab=vocab)
    if not examples:
        raise click.ClickException("no trainable examples after length filtering")
    click.echo(f"{len(examples)} examples ({dropped} dropped for length)")
    model_config = ModelConfig(vocab_size=vocab.size, d_model=d_model,
                               encoder_layers=layers, decoder_layers=layers,
                               max_len=max_len)
    train_config = TrainConfig(epochs=epochs, batch_size=batch_size, lr=lr, seed=seed)
    train(examples, vocab, model_config, train_config,
          out_dir=Path(out_dir), log=click.echo)
    click.echo(f"checkpoint written to {out_dir}/checkpoint.pt")


@main.command("generate")
@click.argument("examples_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--checkpoint", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--vocab", "vocab_path", type=click.Path(exists=True, dir_okay=False),
              required=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.option("--nucleus-p", type=float, default=0.85, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--batch-size", type=int, default=16, show_default=True)
def generate_cmd(examples_path, checkpoint, vocab_path, out, nucleus_p, seed,
                 batch_size):
    """Sample outputs for a toolkit dataset; writes eval-ready outputs JSONL."""
    vocab = load_vocab(vocab_path)
    model = load_checkpoint(checkpoint, vocab)
    examples, dropped = load_examples(examples_path, max_src=model.config.max_len)
    if dropped:
        click.echo(f"warning: {dropped} examples exceed the model context; skipped")
    with Path(out).open("w", encoding="utf-8") as fh:
        for i in range(0, len(examples), batch_size):
            group = examples[i : i + batch_size]
            prompts = [e.prompt_ids for e in group]
            lengths = [[e.measure_lengths[m] for _, m in e.masks] for e in group]
            results = generate(model, vocab, prompts, lengths,
                               nucleus_p=nucleus_p, seed=seed + i)
            for example, result in zip(group, results):
                fh.write(json.dumps({"id": example.id, "target_ids": result.ids,
                                     "truncated": result.truncated}) + "\n")
    click.echo(f"wrote outputs for {len(examples)} examples to {out}")


@main.command("probe")
@click.option("--checkpoint", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--vocab", "vocab_path", type=click.Path(exists=True, dir_okay=False),
              required=True)
@click.option("--control", multiple=True, required=True,
              help="Control token text, e.g. '<horiz:1>'; repeatable.")
@click.option("--n", type=int, default=200, show_default=True,
              help="Samples per probe cell.")
@click.option("--out", type=click.Path(dir_okay=False), required=True,
              help="Compliance-records JSONL (feed to `trackfill comply`).")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--nucleus-p", type=float, default=0.85, show_default=True)
def probe_cmd(checkpoint, vocab_path, control, n, out, seed, nucleus_p):
    """Empty-prompt probes: conditioned samples per token plus an
    unconditioned baseline, as toolkit compliance records."""
    vocab = load_vocab(vocab_path)
    model = load_checkpoint(checkpoint, vocab)
    records = []
    needs_plain_baseline = False
    for i, token_text in enumerate(control):
        spec = probe.ProbeSpec(control=token_text, sample_count=n)
        records.extend(probe.run_probe(model, vocab, spec, seed=seed + i,
                                       nucleus_p=nucleus_p))
        if token_text == "<dnoc>":
            records.extend(probe.unconditioned_baseline(
                model, vocab, sample_count=n, dnoc_context=True,
                seed=seed + 7_000 + i, nucleus_p=nucleus_p))
        else:
            needs_plain_baseline = True
    if needs_plain_baseline:
        records.extend(probe.unconditioned_baseline(
            model, vocab, sample_count=n, seed=seed + 9_999,
            nucleus_p=nucleus_p))
    probe.write_records(records, Path(out))
    click.echo(f"wrote {len(records)} probe records to {out}")


if __name__ == "__main__":
    main()
