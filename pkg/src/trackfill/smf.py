"""Standard MIDI file (type 0/1) reading and writing.

The reader produces a tempo-free raw score in source ticks; `ingest.quantize`
moves it onto the 24-ticks-per-quarter grid. The writer emits playable type-1
files at 24 PPQ and doubles as the fixture builder for tests.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

from .errors import MidiParseError
from .score import DRUM_INSTRUMENT, QuantizedScore, TICKS_PER_QUARTER

DRUM_CHANNEL = 9


@dataclass(frozen=True, slots=True)
class RawNote:
    pitch: int
    onset: int  # source ticks
    duration: int
    velocity: int


@dataclass
class RawTrack:
    smf_track: int
    channel: int
    instrument: int
    name: str
    is_drum: bool
    notes: list[RawNote] = field(default_factory=list)


@dataclass
class RawScore:
    ppq: int
    tracks: list[RawTrack]
    time_signatures: list[tuple[int, int, int]]  # (tick, numerator, denominator)
    warnings: list[str] = field(default_factory=list)


def _read_varlen(data: bytes, pos: int) -> tuple[int, int]:
    value = 0
    for i in range(4):
        if pos >= len(data):
            raise MidiParseError("truncated variable-length quantity", pos)
        byte = data[pos]
        pos += 1
        value = (value << 7) | (byte & 0x7F)
        if not byte & 0x80:
            return value, pos
    raise MidiParseError("variable-length quantity longer than 4 bytes", pos)


class _TrackState:
    """Per-(smf track, channel) note pairing and metadata."""

    def __init__(self):
        self.open: dict[tuple[int, int], list[tuple[int, int]]] = {}
        self.notes: dict[tuple[int, int], list[RawNote]] = {}
        self.programs: dict[tuple[int, int], int] = {}


def parse_midi(data: bytes) -> RawScore:
    """Parse SMF bytes into a raw score: one track per (SMF track, channel).

    Note-ons are paired FIFO with note-offs; channel 10 is flagged as drums;
    time-signature meta events are collected from every track in tick order.
    Unpaired note-ons are closed at the end of their track with a warning.
    """
    if len(data) < 14:
        raise MidiParseError("file shorter than an SMF header", 0)
    if data[0:4] != b"MThd":
        raise MidiParseError("missing MThd header", 0)
    header_len = struct.unpack(">I", data[4:8])[0]
    if header_len < 6:
        raise MidiParseError(f"MThd length {header_len} < 6", 4)
    fmt, ntrks, division = struct.unpack(">HHH", data[8:14])
    if fmt not in (0, 1):
        raise MidiParseError(f"unsupported SMF format {fmt}", 8)
    if division & 0x8000:
        raise MidiParseError("SMPTE time division is not supported", 12)
    if division == 0:
        raise MidiParseError("zero ticks-per-quarter division", 12)

    pos = 8 + header_len
    state = _TrackState()
    time_signatures: list[tuple[int, int, int]] = []
    track_names: dict[int, str] = {}
    warnings: list[str] = []
    tracks_seen = 0

    while tracks_seen < ntrks and pos < len(data):
        if pos + 8 > len(data):
            raise MidiParseError("truncated chunk header", pos)
        chunk_id = data[pos : pos + 4]
        chunk_len = struct.unpack(">I", data[pos + 4 : pos + 8])[0]
        body_start = pos + 8
        if body_start + chunk_len > len(data):
            raise MidiParseError(f"chunk length {chunk_len} overruns the file", pos + 4)
        if chunk_id != b"MTrk":
            pos = body_start + chunk_len  # unknown chunks are skipped
            continue
        _parse_track(
            data, body_start, body_start + chunk_len, tracks_seen,
            state, time_signatures, track_names, warnings,
        )
        tracks_seen += 1
        pos = body_start + chunk_len

    if tracks_seen < ntrks:
        raise MidiParseError(f"header promises {ntrks} tracks, found {tracks_seen}", pos)

    tracks = []
    for (smf_track, channel), notes in sorted(state.notes.items()):
        if not notes:
            continue
        is_drum = channel == DRUM_CHANNEL
        instrument = DRUM_INSTRUMENT if is_drum else state.programs.get((smf_track, channel), 0)
        tracks.append(
            RawTrack(
                smf_track=smf_track,
                channel=channel,
                instrument=instrument,
                name=track_names.get(smf_track, ""),
                is_drum=is_drum,
                notes=sorted(notes, key=lambda n: (n.onset, n.pitch)),
            )
        )
    time_signatures.sort(key=lambda e: e[0])
    return RawScore(ppq=division, tracks=tracks, time_signatures=time_signatures,
                    warnings=warnings)


def _parse_track(data, pos, end, smf_track, state, time_signatures, track_names, warnings):
    tick = 0
    running_status = None
    while pos < end:
        delta, pos = _read_varlen(data, pos)
        tick += delta
        if pos >= end:
            raise MidiParseError("event truncated at end of track", pos)
        byte = data[pos]
        if byte == 0xFF:
            pos += 1
            if pos >= end:
                raise MidiParseError("truncated meta event", pos)
            meta_type = data[pos]
            pos += 1
            length, pos = _read_varlen(data, pos)
            if pos + length > end:
                raise MidiParseError("meta event overruns its track", pos)
            payload = data[pos : pos + length]
            pos += length
            if meta_type == 0x58 and length >= 2:
                time_signatures.append((tick, payload[0], 1 << payload[1]))
            elif meta_type == 0x03 and smf_track not in track_names:
                track_names[smf_track] = payload.decode("latin-1").strip()
            elif meta_type == 0x2F:
                break
            running_status = None
            continue
        if byte in (0xF0, 0xF7):
            pos += 1
            length, pos = _read_varlen(data, pos)
            if pos + length > end:
                raise MidiParseError("sysex event overruns its track", pos)
            pos += length
            running_status = None
            continue
        if byte & 0x80:
            status = byte
            running_status = status
            pos += 1
        else:
            if running_status is None:
                raise MidiParseError(f"data byte 0x{byte:02x} without running status", pos)
            status = running_status
        kind = status & 0xF0
        channel = status & 0x0F
        n_data = 1 if kind in (0xC0, 0xD0) else 2
        if pos + n_data > end:
            raise MidiParseError("channel event truncated", pos)
        d = data[pos : pos + n_data]
        pos += n_data
        key = (smf_track, channel)
        if kind == 0x90 and d[1] > 0:
            # FIFO queue per (track, channel, pitch)
            state.open.setdefault((smf_track, channel, d[0]), []).append((tick, d[1]))
        elif kind == 0x80 or (kind == 0x90 and d[1] == 0):
            queue = state.open.get((smf_track, channel, d[0]))
            if queue:
                onset, velocity = queue.pop(0)
                state.notes.setdefault(key, []).append(
                    RawNote(d[0], onset, max(1, tick - onset), velocity)
                )
            # a note-off with no matching note-on is silently dropped
        elif kind == 0xC0:
            state.programs.setdefault(key, d[0])

    # close unpaired note-ons at the end of the track
    for (smf_t, channel, pitch), queue in sorted(state.open.items()):
        if smf_t != smf_track or not queue:
            continue
        for onset, velocity in queue:
            state.notes.setdefault((smf_t, channel), []).append(
                RawNote(pitch, onset, max(1, tick - onset), velocity)
            )
            warnings.append(
                f"track {smf_t} ch {channel}: note-on pitch {pitch} at tick {onset} "
                "had no note-off; closed at end of track"
            )
        queue.clear()


def _varlen(value: int) -> bytes:
    out = [value & 0x7F]
    value >>= 7
    while value:
        out.append(0x80 | (value & 0x7F))
        value >>= 7
    return bytes(reversed(out))


def _signature_for_length(length: int) -> tuple[int, int] | None:
    """A (numerator, denominator) pair matching a measure length in ticks, if any."""
    for denom in (4, 8, 2, 16, 1, 32):
        ticks_per_unit = 4 * TICKS_PER_QUARTER
        if length * denom % ticks_per_unit:
            continue
        num = length * denom // ticks_per_unit
        if 1 <= num <= 255:
            return num, denom
    return None


def write_smf(score: QuantizedScore, *, tempo_us_per_quarter: int = 500_000) -> bytes:
    """Serialize a quantized score as an SMF type-1 file at 24 PPQ."""
    chunks = []

    # conductor track: tempo plus a time-signature event at each length change
    conductor: list[tuple[int, int, bytes]] = [
        (0, 0, bytes([0xFF, 0x51, 0x03]) + tempo_us_per_quarter.to_bytes(3, "big"))
    ]
    mm = score.measure_map
    prev = None
    for i, length in enumerate(mm.lengths):
        if length == prev:
            continue
        prev = length
        sig = _signature_for_length(length)
        if sig is None:
            continue  # odd length; playback falls back to the previous signature
        num, denom = sig
        dd = denom.bit_length() - 1
        conductor.append((mm.start(i), 0, bytes([0xFF, 0x58, 0x04, num, dd, 24, 8])))
    chunks.append(_track_chunk(conductor))

    melodic_channels = [c for c in range(16) if c != DRUM_CHANNEL]
    next_channel = 0
    for track in score.tracks:
        if track.is_drum:
            channel = DRUM_CHANNEL
        else:
            channel = melodic_channels[next_channel % len(melodic_channels)]
            next_channel += 1
        events: list[tuple[int, int, bytes]] = []
        if track.name:
            events.append((0, 0, bytes([0xFF, 0x03]) + _varlen(len(track.name.encode("latin-1")))
                           + track.name.encode("latin-1")))
        if not track.is_drum:
            events.append((0, 0, bytes([0xC0 | channel, track.instrument])))
        for n in track.notes:
            events.append((n.onset, 2, bytes([0x90 | channel, n.pitch, n.velocity])))
            events.append((n.onset + n.duration, 1, bytes([0x80 | channel, n.pitch, 0])))
        chunks.append(_track_chunk(events))

    header = b"MThd" + struct.pack(">IHHH", 6, 1, len(chunks), TICKS_PER_QUARTER)
    return header + b"".join(chunks)


def _track_chunk(events: list[tuple[int, int, bytes]]) -> bytes:
    """Assemble one MTrk chunk from (tick, order, payload) events."""
    events = sorted(events, key=lambda e: (e[0], e[1]))
    body = bytearray()
    last = 0
    for tick, _, payload in events:
        body += _varlen(tick - last)
        body += payload
        last = tick
    body += _varlen(0) + bytes([0xFF, 0x2F, 0x00])
    return b"MTrk" + struct.pack(">I", len(body)) + bytes(body)
