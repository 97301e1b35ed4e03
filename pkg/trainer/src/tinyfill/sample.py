"""Grammar-masked nucleus sampling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .model import Seq2Seq
from .vocab import GrammarMask, Vocab


@dataclass
class Generated:
    ids: list[int]
    truncated: bool  # length cap hit before end-of-target


def _nucleus_pick(probs: torch.Tensor, p: float,
                  generator: torch.Generator) -> torch.Tensor:
    """Sample within the smallest probability mass >= p (per row)."""
    sorted_probs, order = torch.sort(probs, descending=True, dim=-1)
    cumulative = torch.cumsum(sorted_probs, dim=-1)
    keep = cumulative - sorted_probs < p  # top-1 always kept
    trimmed = sorted_probs * keep
    trimmed = trimmed / trimmed.sum(dim=-1, keepdim=True)
    picked = torch.multinomial(trimmed, 1, generator=generator)
    return order.gather(-1, picked).squeeze(-1)


@torch.no_grad()
def generate(model: Seq2Seq, vocab: Vocab, prompts: list[list[int]],
             cell_lengths: list[list[int]], *, nucleus_p: float | None = None,
             max_new_tokens: int = 400, seed: int = 0) -> list[Generated]:
    """Sample grammar-legal targets for a batch of prompts.

    `cell_lengths[i][k]` is the measure length of prompt i's masked cell k.
    Every emitted sequence decodes without grammar errors; nucleus_p -> 0
    degenerates to greedy decoding.
    """
    model.eval()
    if nucleus_p is None:
        nucleus_p = model.config.nucleus_p
    # the decoder's position table admits the start token plus max_len-1 steps
    max_new_tokens = min(max_new_tokens, model.config.max_len - 1)
    grammar = GrammarMask(vocab)
    eot = grammar.eot
    batch = len(prompts)
    s = max(len(p) for p in prompts)
    if s > model.config.max_len:
        raise ValueError(f"prompt length {s} exceeds the model context "
                         f"{model.config.max_len}")
    src = torch.full((batch, s), eot, dtype=torch.long)
    src_valid = torch.zeros((batch, s), dtype=torch.bool)
    for row, prompt in enumerate(prompts):
        src[row, : len(prompt)] = torch.tensor(prompt, dtype=torch.long)
        src_valid[row, : len(prompt)] = True

    memory = model.encode(src, src_valid)
    caches = model.new_caches()
    generator = torch.Generator().manual_seed(seed)

    states = [grammar.start_state(lengths) for lengths in cell_lengths]
    outputs: list[list[int]] = [[] for _ in range(batch)]
    finished = [False] * batch
    step_input = torch.full((batch, 1), eot, dtype=torch.long)  # start token

    for step in range(max_new_tokens):
        logits = model.decode(step_input, memory, src_valid,
                              caches=caches, offset=step)[:, -1, :]
        allowed = torch.from_numpy(
            np.stack([grammar.allowed(state) for state in states]))
        logits = logits.masked_fill(~allowed, float("-inf"))
        probs = torch.softmax(logits, dim=-1)
        if nucleus_p <= 1e-8:
            picked = probs.argmax(dim=-1)
        else:
            picked = _nucleus_pick(probs, nucleus_p, generator)
        for row in range(batch):
            token_id = int(picked[row])
            if finished[row]:
                continue
            outputs[row].append(token_id)
            grammar.advance(states[row], token_id)
            if token_id == eot:
                finished[row] = True
        if all(finished):
            break
        step_input = picked.unsqueeze(1)

    return [Generated(ids=outputs[row], truncated=not finished[row])
            for row in range(batch)]
