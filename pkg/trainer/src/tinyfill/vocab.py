"""Vocabulary dump loading and the target-grammar sampling mask.

The trainer never tokenizes music itself: it reads the toolkit's `vocab`
dump (id, spelling, family, payload per token) and the documented target
grammar, and turns token text into ids by dictionary lookup.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class Vocab:
    size: int
    hash: str
    text_to_id: dict[str, int]
    id_to_text: list[str]
    family: list[str]       # per id
    payload_a: list[int]    # per id

    def ids(self, text: str) -> list[int]:
        try:
            return [self.text_to_id[piece] for piece in text.split()]
        except KeyError as exc:
            raise KeyError(f"spelling {exc} not in the vocabulary dump") from None

    def text(self, ids) -> str:
        return " ".join(self.id_to_text[i] for i in ids)

    def family_ids(self, family: str) -> list[int]:
        return [i for i, f in enumerate(self.family) if f == family]


def load_vocab(path: str | Path) -> Vocab:
    payload = json.loads(Path(path).read_text())
    tokens = payload["tokens"]
    size = payload["size"]
    id_to_text = [""] * size
    family = [""] * size
    payload_a = [0] * size
    text_to_id = {}
    for entry in tokens:
        i = entry["id"]
        id_to_text[i] = entry["text"]
        family[i] = entry["family"]
        payload_a[i] = entry["a"]
        text_to_id[entry["text"]] = i
    return Vocab(size=size, hash=payload["hash"], text_to_id=text_to_id,
                 id_to_text=id_to_text, family=family, payload_a=payload_a)


class GrammarMask:
    """Legal-next-token masks for target streams, per the documented grammar:
    fill indices ascend, positions ascend within a block and stay below the
    masked cell's measure length, note-ons are followed by durations."""

    def __init__(self, vocab: Vocab):
        self.vocab = vocab
        self.eot = vocab.family_ids("eot")[0]
        fills = vocab.family_ids("fill")
        self.fill_base = fills[0]
        self.n_fill = len(fills)
        positions = vocab.family_ids("pos")
        self.pos_base = positions[0]
        self.n_pos = len(positions)
        self.non_ids = np.array(vocab.family_ids("non"))
        self.dur_ids = np.array(vocab.family_ids("dur"))
        # contiguity lets position/fill ranges be sliced
        assert fills == list(range(self.fill_base, self.fill_base + self.n_fill))
        assert positions == list(range(self.pos_base, self.pos_base + self.n_pos))

    def start_state(self, cell_measure_lengths: list[int]) -> dict:
        """One state per sequence. `cell_measure_lengths[k]` is the measure
        length of masked cell k."""
        return {"lengths": cell_measure_lengths, "fill": -1, "pos": -1,
                "expect": "block", "done": False}

    def allowed(self, state: dict) -> np.ndarray:
        mask = np.zeros(self.vocab.size, dtype=bool)
        if state["done"]:
            mask[self.eot] = True
            return mask
        expect = state["expect"]
        if expect == "after_pos":
            mask[self.non_ids] = True
            return mask
        if expect == "after_non":
            mask[self.dur_ids] = True
            return mask
        # block boundary or after a complete note
        n_cells = len(state["lengths"])
        lo = state["fill"] + 1
        if lo < n_cells:
            mask[self.fill_base + lo : self.fill_base + n_cells] = True
        mask[self.eot] = True
        if state["fill"] >= 0:
            length = state["lengths"][state["fill"]]
            first = state["pos"] + 1
            if first < length:
                mask[self.pos_base + first : self.pos_base + length] = True
            if expect == "after_dur":
                mask[self.non_ids] = True
        return mask

    def advance(self, state: dict, token_id: int) -> None:
        if state["done"]:
            return
        family = self.vocab.family[token_id]
        if family == "eot":
            state["done"] = True
        elif family == "fill":
            state["fill"] = self.vocab.payload_a[token_id]
            state["pos"] = -1
            state["expect"] = "block"
        elif family == "pos":
            state["pos"] = self.vocab.payload_a[token_id]
            state["expect"] = "after_pos"
        elif family == "non":
            state["expect"] = "after_non"
        elif family == "dur":
            state["expect"] = "after_dur"
        else:
            raise ValueError(f"token {self.vocab.id_to_text[token_id]} is not "
                             "part of the target grammar")
