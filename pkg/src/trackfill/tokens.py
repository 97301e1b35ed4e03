"""Token vocabulary for the infilling language.

Tokens are lightweight named tuples; the vocabulary is a fixed, documented
enumeration mapping every token to a stable integer id, and every token has a
bijective text spelling like ``<non:60>``. Ordering: families in the order of
`_FAMILY_ORDER`, payloads ascending within a family.
"""

from __future__ import annotations

import hashlib
from functools import lru_cache
from typing import Iterable, NamedTuple

from .errors import TokenTextError

# payload limits (vocabulary finiteness)
MAX_INSTRUMENT = 128       # 128 = drums
MAX_MEASURE_TICKS = 192
MAX_DURATION = 192         # longer notes are clamped when tokenized
MAX_MASKS = 256
MAX_TRACKS = 32            # per-track control blocks address at most this many
MAX_RHYTHM_COUNT = 8       # 2D conditioning counts clamp here

INSTRUMENT = "inst"
MEASURE_SEP = "msep"
MEASURE_LENGTH = "mlen"
POSITION = "pos"
NOTE_ON = "non"
DURATION = "dur"
MASK = "mask"
FILL = "fill"
EOT = "eot"
HORIZ = "horiz"
INTEREST = "interest"
VERT = "vert"
PCS = "pcs"
STEP = "step"
LEAP = "leap"
DNOC = "dnoc"
LO_STRICT = "lo-strict"
HI_STRICT = "hi-strict"
LO_LOOSE = "lo-loose"
HI_LOOSE = "hi-loose"
TRACK_REF = "track"
MASKED_PITCH_1D = "mp1d"
MASKED_PITCH_2D = "mp2d"


class Tok(NamedTuple):
    family: str
    a: int = 0
    b: int = 0


# family -> (payload arity, range of a, range of b)
_FAMILIES: dict[str, tuple[int, range, range]] = {
    INSTRUMENT: (1, range(MAX_INSTRUMENT + 1), range(1)),
    MEASURE_SEP: (0, range(1), range(1)),
    MEASURE_LENGTH: (1, range(1, MAX_MEASURE_TICKS + 1), range(1)),
    POSITION: (1, range(MAX_MEASURE_TICKS), range(1)),
    NOTE_ON: (1, range(128), range(1)),
    DURATION: (1, range(1, MAX_DURATION + 1), range(1)),
    MASK: (1, range(MAX_MASKS), range(1)),
    FILL: (1, range(MAX_MASKS), range(1)),
    EOT: (0, range(1), range(1)),
    HORIZ: (1, range(6), range(1)),
    INTEREST: (1, range(3), range(1)),
    VERT: (1, range(5), range(1)),
    PCS: (1, range(5), range(1)),
    STEP: (1, range(7), range(1)),
    LEAP: (1, range(7), range(1)),
    DNOC: (0, range(1), range(1)),
    LO_STRICT: (0, range(1), range(1)),
    HI_STRICT: (0, range(1), range(1)),
    LO_LOOSE: (0, range(1), range(1)),
    HI_LOOSE: (0, range(1), range(1)),
    TRACK_REF: (1, range(MAX_TRACKS), range(1)),
    MASKED_PITCH_1D: (0, range(1), range(1)),
    MASKED_PITCH_2D: (2, range(1, MAX_RHYTHM_COUNT + 1), range(1, MAX_RHYTHM_COUNT + 1)),
}

_FAMILY_ORDER = (
    INSTRUMENT, MEASURE_SEP, MEASURE_LENGTH, POSITION, NOTE_ON, DURATION,
    MASK, FILL, EOT, HORIZ, INTEREST, VERT, PCS, STEP, LEAP, DNOC,
    LO_STRICT, HI_STRICT, LO_LOOSE, HI_LOOSE, TRACK_REF,
    MASKED_PITCH_1D, MASKED_PITCH_2D,
)


def make(family: str, a: int = 0, b: int = 0) -> Tok:
    """Construct a validated token."""
    arity, range_a, range_b = _FAMILIES[family]
    if arity >= 1 and a not in range_a:
        raise ValueError(f"{family} payload {a} outside {range_a}")
    if arity == 2 and b not in range_b:
        raise ValueError(f"{family} payload {b} outside {range_b}")
    if family == MASKED_PITCH_2D and b > a:
        raise ValueError(f"mp2d pitch-class count {b} exceeds onset count {a}")
    return Tok(family, a, b)


def inst(program: int) -> Tok: return make(INSTRUMENT, program)
def mlen(ticks: int) -> Tok: return make(MEASURE_LENGTH, ticks)
def pos(tick: int) -> Tok: return make(POSITION, tick)
def non(pitch: int) -> Tok: return make(NOTE_ON, pitch)
def dur(ticks: int) -> Tok: return make(DURATION, ticks)
def mask(k: int) -> Tok: return make(MASK, k)
def fill(k: int) -> Tok: return make(FILL, k)
def track_ref(index: int) -> Tok: return make(TRACK_REF, index)
def mp2d(n_onsets: int, n_pitch_classes: int) -> Tok:
    return make(MASKED_PITCH_2D, n_onsets, n_pitch_classes)


MSEP = Tok(MEASURE_SEP)
EOT_TOKEN = Tok(EOT)
DNOC_TOKEN = Tok(DNOC)
MP1D = Tok(MASKED_PITCH_1D)

# control-token constructors by bin
def horiz(b: int) -> Tok: return make(HORIZ, b)
def interest(b: int) -> Tok: return make(INTEREST, b)
def vert(b: int) -> Tok: return make(VERT, b)
def pcs(b: int) -> Tok: return make(PCS, b)
def step(b: int) -> Tok: return make(STEP, b)
def leap(b: int) -> Tok: return make(LEAP, b)


def render(token: Tok) -> str:
    arity = _FAMILIES[token.family][0]
    if arity == 0:
        return f"<{token.family}>"
    if arity == 1:
        return f"<{token.family}:{token.a}>"
    return f"<{token.family}:{token.a},{token.b}>"


def render_text(tokens: Iterable[Tok]) -> str:
    return " ".join(render(t) for t in tokens)


def _parse_one(piece: str, index: int) -> Tok:
    if not (piece.startswith("<") and piece.endswith(">")):
        raise TokenTextError(f"not a token spelling: {piece!r}", index)
    body = piece[1:-1]
    family, _, payload = body.partition(":")
    if family not in _FAMILIES:
        raise TokenTextError(f"unknown token family in {piece!r}", index)
    arity = _FAMILIES[family][0]
    try:
        if arity == 0:
            if payload:
                raise ValueError
            return make(family)
        if arity == 1:
            return make(family, int(payload))
        a_str, _, b_str = payload.partition(",")
        return make(family, int(a_str), int(b_str))
    except ValueError as exc:
        raise TokenTextError(f"bad payload in {piece!r}: {exc}", index) from None


def parse_text(text: str) -> tuple[Tok, ...]:
    return tuple(_parse_one(piece, i) for i, piece in enumerate(text.split()))


@lru_cache(maxsize=1)
def vocabulary() -> tuple[Tok, ...]:
    """Every token, in the documented order."""
    vocab: list[Tok] = []
    for family in _FAMILY_ORDER:
        arity, range_a, range_b = _FAMILIES[family]
        if arity == 0:
            vocab.append(Tok(family))
        elif arity == 1:
            vocab.extend(Tok(family, a) for a in range_a)
        else:
            vocab.extend(
                Tok(family, a, b)
                for a in range_a for b in range_b
                if not (family == MASKED_PITCH_2D and b > a)
            )
    return tuple(vocab)


@lru_cache(maxsize=1)
def _token_ids() -> dict[Tok, int]:
    return {token: i for i, token in enumerate(vocabulary())}


def vocab_size() -> int:
    return len(vocabulary())


def token_to_id(token: Tok) -> int:
    return _token_ids()[token]


def id_to_token(token_id: int) -> Tok:
    return vocabulary()[token_id]


def to_ids(tokens: Iterable[Tok]) -> list[int]:
    ids = _token_ids()
    return [ids[t] for t in tokens]


def from_ids(ids: Iterable[int]) -> tuple[Tok, ...]:
    vocab = vocabulary()
    return tuple(vocab[i] for i in ids)


def vocab_hash() -> str:
    """Stable fingerprint of the vocabulary enumeration."""
    text = "\n".join(render(t) for t in vocabulary())
    return hashlib.sha256(text.encode()).hexdigest()
