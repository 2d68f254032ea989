"""Standard MIDI File (format 0/1) reading and format-0 writing.

The reader works in two layers: :func:`read_smf` decodes chunks into raw
timed events (needed by corpus curation to inspect programs and pitch bend),
and :func:`parse_smf` turns those events into a :class:`Performance` with all
times resolved to seconds through the tempo map.
"""

from __future__ import annotations

import bisect
import logging
import struct
from collections import defaultdict
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

from .notes import PITCH_MAX, PITCH_MIN, Note, Performance

logger = logging.getLogger(__name__)

DEFAULT_PPQN = 480
DEFAULT_TEMPO = 500_000  # microseconds per quarter note, i.e. 120 BPM
SUSTAIN_CC = 64
MAX_DELTA = 0x0FFFFFFF

# data-byte counts for channel voice messages, by high nibble
_DATA_LEN = {0x80: 2, 0x90: 2, 0xA0: 2, 0xB0: 2, 0xC0: 1, 0xD0: 1, 0xE0: 2}


class MidiParseError(ValueError):
    """Malformed SMF data; ``offset`` is the byte position of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.message = message
        self.offset = offset

    def __reduce__(self):
        return type(self), (self.message, self.offset)


class MidiEvent(NamedTuple):
    tick: int
    status: int  # channel messages keep the channel in the low nibble; 0xFF meta, 0xF0/0xF7 sysex
    data: bytes
    meta_type: int = -1

    @property
    def kind(self) -> int:
        return self.status & 0xF0 if self.status < 0xF0 else self.status

    @property
    def channel(self) -> int:
        return self.status & 0x0F


@dataclass
class SmfFile:
    format: int
    division: int
    tracks: list[list[MidiEvent]] = field(default_factory=list)

    @property
    def is_smpte(self) -> bool:
        return bool(self.division & 0x8000)

    def events(self):
        for track in self.tracks:
            yield from track


def _read_vlq(buf: bytes, pos: int, end: int) -> tuple[int, int]:
    value = 0
    for i in range(4):
        if pos >= end:
            raise MidiParseError("truncated variable-length quantity", pos)
        b = buf[pos]
        pos += 1
        value = (value << 7) | (b & 0x7F)
        if not b & 0x80:
            return value, pos
    raise MidiParseError("variable-length quantity longer than 4 bytes", pos - 4)


def _write_vlq(value: int) -> bytes:
    if not 0 <= value <= MAX_DELTA:
        raise ValueError(f"value {value} not representable as a MIDI variable-length quantity")
    out = [value & 0x7F]
    value >>= 7
    while value:
        out.append((value & 0x7F) | 0x80)
        value >>= 7
    return bytes(reversed(out))


def _read_track(buf: bytes, pos: int, end: int) -> list[MidiEvent]:
    events: list[MidiEvent] = []
    tick = 0
    running: Optional[int] = None
    while pos < end:
        delta, pos = _read_vlq(buf, pos, end)
        tick += delta
        if pos >= end:
            raise MidiParseError("track ends after a delta time", pos)
        status_pos = pos
        status = buf[pos]
        if status & 0x80:
            pos += 1
        else:
            if running is None:
                raise MidiParseError("data byte without a preceding channel status (running status)", pos)
            status = running

        if status == 0xFF:
            if pos >= end:
                raise MidiParseError("truncated meta event", pos)
            meta_type = buf[pos]
            length, pos = _read_vlq(buf, pos + 1, end)
            if pos + length > end:
                raise MidiParseError("meta event runs past end of track", pos)
            events.append(MidiEvent(tick, 0xFF, bytes(buf[pos:pos + length]), meta_type))
            pos += length
            running = None
            if meta_type == 0x2F:
                break
        elif status in (0xF0, 0xF7):
            length, pos = _read_vlq(buf, pos, end)
            if pos + length > end:
                raise MidiParseError("sysex event runs past end of track", pos)
            events.append(MidiEvent(tick, status, bytes(buf[pos:pos + length])))
            pos += length
            running = None
        elif status >= 0xF0:
            raise MidiParseError(f"system message 0x{status:02X} is not allowed in a MIDI file", status_pos)
        else:
            n = _DATA_LEN[status & 0xF0]
            if pos + n > end:
                raise MidiParseError("truncated channel message", pos)
            data = bytes(buf[pos:pos + n])
            if any(b & 0x80 for b in data):
                raise MidiParseError("status byte where a data byte was expected", pos)
            events.append(MidiEvent(tick, status, data))
            pos += n
            running = status
    return events


def read_smf(data: bytes) -> SmfFile:
    """Decode the chunk structure of a MIDI file into per-track events."""
    buf = memoryview(bytes(data))
    if len(buf) < 14 or bytes(buf[0:4]) != b"MThd":
        raise MidiParseError("missing MThd header chunk", 0)
    (hlen,) = struct.unpack(">I", buf[4:8])
    if hlen < 6 or 8 + hlen > len(buf):
        raise MidiParseError(f"bad header length {hlen}", 4)
    fmt, ntracks, division = struct.unpack(">HHH", buf[8:14])
    if fmt not in (0, 1):
        raise MidiParseError(f"unsupported SMF format {fmt}", 8)
    if division == 0:
        raise MidiParseError("zero time division", 12)
    smf = SmfFile(format=fmt, division=division)
    pos = 8 + hlen
    while pos < len(buf):
        if pos + 8 > len(buf):
            raise MidiParseError("truncated chunk header", pos)
        ctype = bytes(buf[pos:pos + 4])
        (clen,) = struct.unpack(">I", buf[pos + 4:pos + 8])
        body = pos + 8
        if body + clen > len(buf):
            raise MidiParseError(f"chunk {ctype!r} runs past end of file", pos)
        if ctype == b"MTrk":
            smf.tracks.append(_read_track(buf, body, body + clen))
        elif not all(32 <= c < 127 for c in ctype):
            raise MidiParseError(f"invalid chunk type {ctype!r}", pos)
        pos = body + clen
    if len(smf.tracks) != ntracks:
        logger.warning("header declares %d tracks, found %d", ntracks, len(smf.tracks))
    return smf


class TempoMap:
    """Piecewise-linear tick -> seconds conversion."""

    def __init__(self, smf: SmfFile):
        if smf.is_smpte:
            fps = -((smf.division >> 8) - 256)
            fps = 29.97 if fps == 29 else float(fps)
            self._fixed = 1.0 / (fps * (smf.division & 0xFF))
            return
        self._fixed = None
        self.ppqn = smf.division
        changes: dict[int, int] = {}
        for ev in smf.events():
            if ev.status == 0xFF and ev.meta_type == 0x51 and len(ev.data) == 3:
                changes[ev.tick] = int.from_bytes(ev.data, "big")
        self.ticks = [0]
        self.tempos = [changes.pop(0, DEFAULT_TEMPO)]
        self.seconds = [0.0]
        for tick in sorted(changes):
            self.seconds.append(self.to_seconds(tick))
            self.ticks.append(tick)
            self.tempos.append(changes[tick])

    def to_seconds(self, tick: int) -> float:
        if self._fixed is not None:
            return tick * self._fixed
        i = bisect.bisect_right(self.ticks, tick) - 1
        return self.seconds[i] + (tick - self.ticks[i]) * self.tempos[i] / (1e6 * self.ppqn)


def parse_smf(data: bytes, source: Optional[str] = None) -> Performance:
    """Parse a MIDI file into a :class:`Performance`.

    Notes are paired per (track, channel, pitch). At any tick, note-offs for
    notes that were already sounding are applied before new note-ons, so an
    off/on pair on one key at the same instant reads as a re-onset regardless
    of event order. A note-on for a key that is still down closes the
    sounding note first. Notes left open at the end of a track are closed at
    the track's last event time. Pitches outside the piano range and
    zero-length notes are dropped. All such repairs become warnings.
    """
    return performance_from_smf(read_smf(data), source)


def performance_from_smf(smf: SmfFile, source: Optional[str] = None) -> Performance:
    tempo = TempoMap(smf)
    notes: list[Note] = []
    pedal: list[tuple[float, int]] = []
    warnings: list[str] = []
    skipped_range = 0

    def emit(pitch, on_tick, off_tick, vel):
        nonlocal skipped_range
        if not PITCH_MIN <= pitch <= PITCH_MAX:
            skipped_range += 1
            return
        if off_tick <= on_tick:
            warnings.append(f"dropped zero-length note pitch={pitch} at tick {on_tick}")
            return
        notes.append(Note(pitch, tempo.to_seconds(on_tick), tempo.to_seconds(off_tick), vel))

    for t_idx, track in enumerate(smf.tracks):
        active: dict[tuple[int, int], tuple[int, int]] = {}
        by_tick: dict[int, list[MidiEvent]] = defaultdict(list)
        for ev in track:
            by_tick[ev.tick].append(ev)
        last_tick = track[-1].tick if track else 0
        for tick in sorted(by_tick):
            offs, ons = [], []
            for ev in by_tick[tick]:
                kind = ev.kind
                if kind == 0x90 and ev.data[1] > 0:
                    ons.append(ev)
                elif kind in (0x80, 0x90):
                    offs.append(ev)
                elif kind == 0xB0 and ev.data[0] == SUSTAIN_CC:
                    pedal.append((tempo.to_seconds(tick), ev.data[1]))
            leftover = []
            for ev in offs:
                key = (ev.channel, ev.data[0])
                if key in active and active[key][0] < tick:
                    on_tick, vel = active.pop(key)
                    emit(key[1], on_tick, tick, vel)
                else:
                    leftover.append(ev)
            for ev in ons:
                key = (ev.channel, ev.data[0])
                if key in active:
                    on_tick, vel = active.pop(key)
                    emit(key[1], on_tick, tick, vel)
                active[key] = (tick, ev.data[1])
            for ev in leftover:
                key = (ev.channel, ev.data[0])
                if key in active:
                    on_tick, vel = active.pop(key)
                    emit(key[1], on_tick, tick, vel)
        for (channel, pitch), (on_tick, vel) in sorted(active.items()):
            warnings.append(
                f"track {t_idx}: note-on without note-off (channel {channel}, pitch {pitch}); "
                f"closed at tick {last_tick}"
            )
            emit(pitch, on_tick, last_tick, vel)

    if skipped_range:
        warnings.append(f"dropped {skipped_range} notes outside the piano range")
    for w in warnings:
        logger.warning("%s: %s", source or "<bytes>", w)
    return Performance(notes=tuple(notes), pedal_events=tuple(pedal), source=source, warnings=tuple(warnings))


def write_smf(performance: Performance, ppqn: int = DEFAULT_PPQN) -> bytes:
    """Encode a performance as a format-0 file at a fixed 120 BPM.

    Times are rounded to the nearest tick. A note whose duration rounds to
    zero ticks is stretched to one tick when that does not run into the next
    note of the same pitch; otherwise the performance is not representable at
    this resolution and ``ValueError`` is raised.
    """
    if not 0 < ppqn < 0x8000:
        raise ValueError(f"ppqn must be in 1..32767, got {ppqn}")
    ticks_per_second = ppqn * 1e6 / DEFAULT_TEMPO

    def to_tick(t: float) -> int:
        tick = int(t * ticks_per_second + 0.5)
        if tick < 0 or tick > MAX_DELTA:
            raise ValueError(f"time {t} s outside the representable tick range")
        return tick

    # (tick, order, message); order puts note-offs before pedal before note-ons
    events: list[tuple[int, int, int, bytes]] = []
    by_pitch: dict[int, list[Note]] = defaultdict(list)
    for n in performance.notes:
        by_pitch[n.pitch].append(n)
    for pitch, pnotes in by_pitch.items():
        pnotes.sort(key=lambda n: n.onset)
        on_ticks = [to_tick(n.onset) for n in pnotes]
        for i, n in enumerate(pnotes):
            on, off = on_ticks[i], to_tick(n.offset)
            nxt = on_ticks[i + 1] if i + 1 < len(pnotes) else None
            if nxt is not None and off > nxt:
                raise ValueError(f"overlapping notes on pitch {pitch}; run merge_collisions first")
            if off <= on:
                off = on + 1
                if nxt is not None and off > nxt:
                    raise ValueError(
                        f"notes on pitch {pitch} at {n.onset:.6f} s collapse at {ppqn} PPQN"
                    )
            events.append((on, 2, pitch, bytes([0x90, pitch, n.velocity])))
            events.append((off, 0, pitch, bytes([0x80, pitch, 0])))
    for t, value in performance.pedal_events:
        events.append((to_tick(t), 1, 0, bytes([0xB0, SUSTAIN_CC, int(value)])))
    events.sort(key=lambda e: e[:3])

    body = bytearray()
    body += b"\x00\xFF\x51\x03" + DEFAULT_TEMPO.to_bytes(3, "big")
    last = 0
    for tick, _, _, msg in events:
        body += _write_vlq(tick - last) + msg
        last = tick
    body += b"\x00\xFF\x2F\x00"

    header = b"MThd" + struct.pack(">IHHH", 6, 0, 1, ppqn)
    return header + b"MTrk" + struct.pack(">I", len(body)) + bytes(body)
