from __future__ import annotations

import json
from pathlib import Path

import pytest

from tinyfill import corpus, toolkit
from tinyfill.data import load_examples
from tinyfill.model import ModelConfig
from tinyfill.train import TrainConfig, train
from tinyfill.vocab import load_vocab


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: trainer acceptance criterion")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = []
    for outcome in ("passed", "failed"):
        for report in terminalreporter.stats.get(outcome, []):
            if getattr(report, "when", "call") != "call":
                continue
            if "test_acceptance.py" not in report.nodeid:
                continue
            lines.append((report.nodeid.split("::")[-1], outcome.upper()))
    if lines:
        terminalreporter.write_sep("-", "trainer acceptance criteria")
        for name, outcome in sorted(lines):
            terminalreporter.write_line(f"[{outcome}] {name}")


@pytest.fixture(scope="session")
def work(tmp_path_factory) -> Path:
    return tmp_path_factory.mktemp("tinyfill")


@pytest.fixture(scope="session")
def vocab_file(work) -> Path:
    return toolkit.dump_vocab(work / "vocab.json")


@pytest.fixture(scope="session")
def vocab(vocab_file):
    return load_vocab(vocab_file)


@pytest.fixture(scope="session")
def tiny_dataset(work) -> Path:
    """A 50-example dataset over a 6-file synthetic corpus."""
    corpus_dir = work / "tiny_corpus"
    corpus.build_corpus(corpus_dir, 6, seed=5)
    return toolkit.make_dataset(corpus_dir, "train", 50, work / "tiny_train.jsonl",
                                seed=5)


@pytest.fixture(scope="session")
def overfit_model(tiny_dataset, vocab, work):
    """A model memorizing the tiny dataset; reused by sampling tests."""
    examples, _ = load_examples(tiny_dataset, max_src=256, max_tgt=240)
    model_config = ModelConfig(vocab_size=vocab.size, d_model=96, n_heads=4,
                               encoder_layers=2, decoder_layers=2, ff=192,
                               dropout=0.0, max_len=256)
    train_config = TrainConfig(epochs=300, batch_size=16, lr=2e-3, seed=1,
                               val_fraction=0.0)
    model, history = train(examples, vocab, model_config, train_config,
                           out_dir=work / "overfit", log=lambda *_: None)
    return model, history, examples


@pytest.fixture(scope="session")
def toy_run(work, vocab):
    """The acceptance model: trained once per session on a synthetic corpus
    built and tokenized entirely through the toolkit CLI."""
    from types import SimpleNamespace

    corpus_dir = work / "train_corpus"
    corpus.build_corpus(corpus_dir, 240, seed=0)
    dataset = toolkit.make_dataset(corpus_dir, "train", 3000,
                                   work / "toy_train.jsonl", seed=3,
                                   conditioning_probs=(0.4, 0.2, 0.4))
    examples, _ = load_examples(dataset, max_src=512, max_tgt=512, vocab=vocab)
    model_config = ModelConfig(vocab_size=vocab.size)
    train_config = TrainConfig(epochs=40, batch_size=32, seed=0)
    model, history = train(examples, vocab, model_config, train_config,
                           out_dir=work / "toy_model", log=print)

    held_out = work / "held_out_corpus"
    corpus.build_corpus(held_out, 60, seed=1000)
    return SimpleNamespace(model=model, history=history, held_out=held_out,
                           work=work)
