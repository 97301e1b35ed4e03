from __future__ import annotations

import numpy as np
import pytest

from tinyfill.vocab import GrammarMask, load_vocab


def test_ids_text_round_trip(vocab):
    text = "<inst:0> <mlen:96> <mask:0> <track:0> <horiz:1>"
    ids = vocab.ids(text)
    assert vocab.text(ids) == text


def test_unknown_spelling_raises(vocab):
    with pytest.raises(KeyError):
        vocab.ids("<nope:1>")


def test_vocab_dump_covers_all_ids(vocab):
    assert len(vocab.id_to_text) == vocab.size
    assert all(vocab.id_to_text)
    assert len(vocab.text_to_id) == vocab.size


def test_grammar_random_walks_stay_legal_and_terminate(vocab):
    grammar = GrammarMask(vocab)
    rng = np.random.default_rng(0)
    for trial in range(200):
        lengths = [int(rng.choice([48, 72, 96, 192]))
                   for _ in range(int(rng.integers(1, 5)))]
        state = grammar.start_state(lengths)
        emitted = []
        for _ in range(300):
            allowed = np.flatnonzero(grammar.allowed(state))
            assert allowed.size > 0  # never a dead end
            token_id = int(rng.choice(allowed))
            emitted.append(token_id)
            grammar.advance(state, token_id)
            if token_id == grammar.eot:
                break
        else:
            # force the cap: end-of-target must always be reachable
            allowed = grammar.allowed(state)
            state2 = dict(state)
            # walk at most two tokens (finish a dangling note) to reach eot
            for _ in range(3):
                ids = np.flatnonzero(grammar.allowed(state2))
                if grammar.eot in ids:
                    break
                grammar.advance(state2, int(ids[0]))
            else:
                pytest.fail("end-of-target unreachable")

        # replay: every emitted token was legal in sequence
        replay = grammar.start_state(lengths)
        for token_id in emitted:
            assert grammar.allowed(replay)[token_id]
            grammar.advance(replay, token_id)


def test_grammar_positions_respect_measure_length(vocab):
    grammar = GrammarMask(vocab)
    state = grammar.start_state([48])
    grammar.advance(state, grammar.fill_base)  # <fill:0>
    allowed = np.flatnonzero(grammar.allowed(state))
    positions = [i - grammar.pos_base for i in allowed
                 if grammar.pos_base <= i < grammar.pos_base + grammar.n_pos]
    assert positions and max(positions) == 47


def test_grammar_positions_ascend(vocab):
    grammar = GrammarMask(vocab)
    state = grammar.start_state([96])
    grammar.advance(state, grammar.fill_base)
    grammar.advance(state, grammar.pos_base + 24)
    grammar.advance(state, int(grammar.non_ids[60]))
    grammar.advance(state, int(grammar.dur_ids[11]))
    allowed = np.flatnonzero(grammar.allowed(state))
    positions = [i - grammar.pos_base for i in allowed
                 if grammar.pos_base <= i < grammar.pos_base + grammar.n_pos]
    assert positions and min(positions) == 25


def test_grammar_fill_indices_ascend(vocab):
    grammar = GrammarMask(vocab)
    state = grammar.start_state([96, 96, 96])
    grammar.advance(state, grammar.fill_base + 1)
    allowed = grammar.allowed(state)
    assert not allowed[grammar.fill_base]      # fill:0 no longer legal
    assert not allowed[grammar.fill_base + 1]  # no repeats
    assert allowed[grammar.fill_base + 2]
    assert allowed[grammar.eot]
