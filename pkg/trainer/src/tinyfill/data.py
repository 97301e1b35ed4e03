"""Loading toolkit JSONL examples and batching them for training."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch


@dataclass
class Example:
    id: str
    prompt_ids: list[int]
    target_ids: list[int]
    masks: list[tuple[int, int]]
    measure_lengths: list[int]
    # per target token: True if it belongs to the fill block of a cell that
    # carries 1D/2D rhythmic conditioning (used for loss bucketing)
    token_conditioned: list[bool]


def _token_conditioning(d: dict, vocab) -> list[bool]:
    if vocab is None or not d.get("conditioning"):
        return [False] * len(d["target_ids"])
    conditioned_cells = {(t, m) for t, m, _ in d["conditioning"]}
    conditioned_k = {k for k, cell in enumerate(map(tuple, d["masks"]))
                     if cell in conditioned_cells}
    flags = []
    current = False
    for token_id in d["target_ids"]:
        if vocab.family[token_id] == "fill":
            current = vocab.payload_a[token_id] in conditioned_k
        elif vocab.family[token_id] == "eot":
            current = False
        flags.append(current)
    return flags


def load_examples(path: str | Path, *, max_src: int = 512, max_tgt: int = 512,
                  vocab=None) -> tuple[list[Example], int]:
    """Returns (kept examples, dropped-for-length count). Passing the vocab
    dump enables per-token conditioning flags for loss bucketing."""
    kept = []
    dropped = 0
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            d = json.loads(line)
            if len(d["prompt_ids"]) > max_src or len(d["target_ids"]) > max_tgt:
                dropped += 1
                continue
            kept.append(Example(
                id=d["id"],
                prompt_ids=d["prompt_ids"],
                target_ids=d["target_ids"],
                masks=[tuple(c) for c in d["masks"]],
                measure_lengths=d["measure_lengths"],
                token_conditioned=_token_conditioning(d, vocab),
            ))
    return kept, dropped


def split_validation(examples: list[Example], fraction: float = 0.1):
    """Deterministic id-hash split, independent of example order."""
    train, val = [], []
    threshold = int(fraction * 2**32)
    for example in examples:
        h = int.from_bytes(hashlib.sha256(example.id.encode()).digest()[:4], "big")
        (val if h < threshold else train).append(example)
    return train, val


@dataclass
class Batch:
    src: torch.Tensor              # (b, s)
    src_valid: torch.Tensor        # (b, s) bool, True = real token
    tgt_in: torch.Tensor           # (b, t) start token + target[:-1]
    labels: torch.Tensor           # (b, t) with -100 on padding
    token_conditioned: torch.Tensor  # (b, t) bool, aligned with labels


def make_batches(examples: list[Example], *, batch_size: int, pad_id: int,
                 start_id: int, rng: np.random.Generator | None = None,
                 length_sorted: bool = True) -> list[Batch]:
    order = list(range(len(examples)))
    if rng is not None:
        rng.shuffle(order)
    if length_sorted:
        # batch similar lengths together; batch order stays shuffled
        order.sort(key=lambda i: len(examples[i].prompt_ids))
        chunks = [order[i:i + batch_size] for i in range(0, len(order), batch_size)]
        if rng is not None:
            rng.shuffle(chunks)
    else:
        chunks = [order[i:i + batch_size] for i in range(0, len(order), batch_size)]

    batches = []
    for chunk in chunks:
        group = [examples[i] for i in chunk]
        s = max(len(e.prompt_ids) for e in group)
        t = max(len(e.target_ids) for e in group)
        src = torch.full((len(group), s), pad_id, dtype=torch.long)
        src_valid = torch.zeros((len(group), s), dtype=torch.bool)
        tgt_in = torch.full((len(group), t), pad_id, dtype=torch.long)
        labels = torch.full((len(group), t), -100, dtype=torch.long)
        token_conditioned = torch.zeros((len(group), t), dtype=torch.bool)
        for row, example in enumerate(group):
            p = torch.tensor(example.prompt_ids, dtype=torch.long)
            src[row, : len(p)] = p
            src_valid[row, : len(p)] = True
            target = torch.tensor(example.target_ids, dtype=torch.long)
            tgt_in[row, 0] = start_id
            tgt_in[row, 1 : len(target)] = target[:-1]
            labels[row, : len(target)] = target
            token_conditioned[row, : len(target)] = torch.tensor(
                example.token_conditioned, dtype=torch.bool)
        batches.append(Batch(src, src_valid, tgt_in, labels, token_conditioned))
    return batches
