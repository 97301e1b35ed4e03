"""Seeded training loop with loss-curve logging and vocabulary pinning."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .data import Example, make_batches, split_validation
from .model import ModelConfig, Seq2Seq
from .vocab import Vocab


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 32
    lr: float = 3e-4
    weight_decay: float = 0.01
    grad_clip: float = 1.0
    seed: int = 0
    val_fraction: float = 0.1


def _loss(model: Seq2Seq, batch) -> torch.Tensor:
    logits = model(batch.src, batch.src_valid, batch.tgt_in)
    return F.cross_entropy(logits.transpose(1, 2), batch.labels, ignore_index=-100)


@torch.no_grad()
def evaluate(model: Seq2Seq, batches) -> dict:
    """Token-mean validation loss: overall, plus tokens inside conditioned
    fill blocks versus the rest (the rhythmic-conditioning information
    advantage shows up as the first being lower)."""
    model.eval()
    sums = {"all": [0.0, 0], "conditioned_cells": [0.0, 0],
            "unconditioned_cells": [0.0, 0]}
    for batch in batches:
        logits = model(batch.src, batch.src_valid, batch.tgt_in)
        per_token = F.cross_entropy(logits.transpose(1, 2), batch.labels,
                                    ignore_index=-100, reduction="none")
        real = batch.labels != -100
        buckets = {
            "all": real,
            "conditioned_cells": real & batch.token_conditioned,
            "unconditioned_cells": real & ~batch.token_conditioned,
        }
        for key, mask in buckets.items():
            sums[key][0] += float(per_token[mask].sum())
            sums[key][1] += int(mask.sum())
    model.train()
    return {key: (total / n if n else float("nan")) for key, (total, n) in sums.items()}


def train(examples: list[Example], vocab: Vocab, model_config: ModelConfig,
          train_config: TrainConfig, *, out_dir: Path,
          log=print) -> tuple[Seq2Seq, list[dict]]:
    """Train on toolkit examples; writes loss_curve.csv and checkpoint.pt."""
    if model_config.vocab_size != vocab.size:
        raise ValueError(f"model vocab {model_config.vocab_size} != dump {vocab.size}")
    out_dir.mkdir(parents=True, exist_ok=True)
    torch.manual_seed(train_config.seed)
    rng = np.random.default_rng(train_config.seed)

    eot = vocab.family_ids("eot")[0]
    train_set, val_set = split_validation(examples, train_config.val_fraction)
    val_batches = make_batches(val_set, batch_size=train_config.batch_size,
                               pad_id=eot, start_id=eot, rng=None) if val_set else []

    model = Seq2Seq(model_config)
    optimizer = torch.optim.AdamW(model.parameters(), lr=train_config.lr,
                                  weight_decay=train_config.weight_decay)
    model.train()

    history = []
    for epoch in range(train_config.epochs):
        batches = make_batches(train_set, batch_size=train_config.batch_size,
                               pad_id=eot, start_id=eot, rng=rng)
        total = 0.0
        for batch in batches:
            optimizer.zero_grad()
            loss = _loss(model, batch)
            loss.backward()
            torch.nn.utils.clip_grad_norm_(model.parameters(), train_config.grad_clip)
            optimizer.step()
            total += float(loss.detach())
        entry = {"epoch": epoch, "train_loss": total / max(1, len(batches))}
        if val_batches:
            entry.update({f"val_{k}": v for k, v in evaluate(model, val_batches).items()})
        history.append(entry)
        log(f"epoch {epoch}: " + " ".join(f"{k}={v:.4f}" for k, v in entry.items()
                                          if k != "epoch"))

    with (out_dir / "loss_curve.csv").open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=sorted({k for h in history for k in h}))
        writer.writeheader()
        writer.writerows(history)
    save_checkpoint(out_dir / "checkpoint.pt", model, vocab)
    return model, history


def save_checkpoint(path: Path, model: Seq2Seq, vocab: Vocab) -> None:
    torch.save({
        "state_dict": model.state_dict(),
        "model_config": model.config.to_dict(),
        "vocab_hash": vocab.hash,
        "vocab_size": vocab.size,
    }, path)


def load_checkpoint(path: str | Path, vocab: Vocab) -> Seq2Seq:
    payload = torch.load(path, map_location="cpu", weights_only=True)
    if payload["vocab_hash"] != vocab.hash:
        raise ValueError(
            f"checkpoint was trained against vocabulary {payload['vocab_hash'][:12]}, "
            f"but the supplied dump hashes to {vocab.hash[:12]}")
    model = Seq2Seq(ModelConfig(**payload["model_config"]))
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model
