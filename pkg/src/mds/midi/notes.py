"""In-memory note model shared by every part of the toolkit.

All times are absolute seconds. Tempo is resolved when a file is parsed, so
nothing downstream ever sees ticks.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional

import numpy as np

logger = logging.getLogger(__name__)

PITCH_MIN = 21
PITCH_MAX = 108
N_KEYS = PITCH_MAX - PITCH_MIN + 1


@dataclass(frozen=True, slots=True)
class Note:
    """One piano key press."""

    pitch: int
    onset: float
    offset: float
    velocity: int = 64

    def __post_init__(self):
        if not PITCH_MIN <= self.pitch <= PITCH_MAX:
            raise ValueError(f"pitch {self.pitch} outside piano range {PITCH_MIN}..{PITCH_MAX}")
        if not 1 <= self.velocity <= 127:
            raise ValueError(f"velocity {self.velocity} outside 1..127")
        if self.onset < 0:
            raise ValueError(f"negative onset {self.onset}")
        if not self.offset > self.onset:
            raise ValueError(f"offset {self.offset} not after onset {self.onset}")

    @property
    def duration(self) -> float:
        return self.offset - self.onset


def sort_key(n: Note) -> tuple:
    return (n.onset, n.pitch, n.offset, n.velocity)


@dataclass(frozen=True)
class Performance:
    """Ordered notes plus optional pedal data and source metadata.

    Ground truths and transcriptions are both represented this way.
    ``warnings`` collects non-fatal problems found while building the object
    (e.g. when parsing) and takes no part in equality.
    """

    notes: tuple[Note, ...] = ()
    pedal_events: tuple[tuple[float, int], ...] = ()
    source: Optional[str] = None
    genre: Optional[str] = None
    polyphony: Optional[int] = None
    dynamics: Optional[int] = None
    warnings: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        notes = tuple(sorted(self.notes, key=sort_key))
        object.__setattr__(self, "notes", notes)
        object.__setattr__(self, "pedal_events", tuple(sorted(self.pedal_events)))

    @classmethod
    def from_notes(cls, notes: Iterable[Note], **metadata) -> "Performance":
        return cls(notes=tuple(notes), **metadata)

    def __len__(self):
        return len(self.notes)

    def __iter__(self):
        return iter(self.notes)

    def with_notes(self, notes: Iterable[Note], warnings: Iterable[str] = ()) -> "Performance":
        return replace(self, notes=tuple(notes), warnings=self.warnings + tuple(warnings))

    @property
    def start(self) -> float:
        return self.notes[0].onset if self.notes else 0.0

    @property
    def end(self) -> float:
        return max((n.offset for n in self.notes), default=0.0)

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Return ``(pitches, onsets, offsets, velocities)`` as numpy arrays."""
        if not self.notes:
            return (np.zeros(0, int), np.zeros(0), np.zeros(0), np.zeros(0, int))
        p = np.fromiter((n.pitch for n in self.notes), int, len(self.notes))
        on = np.fromiter((n.onset for n in self.notes), float, len(self.notes))
        off = np.fromiter((n.offset for n in self.notes), float, len(self.notes))
        v = np.fromiter((n.velocity for n in self.notes), int, len(self.notes))
        return p, on, off, v


def merge_collisions(performance: Performance) -> Performance:
    """Remove same-pitch overlaps while keeping each pitch's sounding time.

    Overlapping notes on one pitch are treated as re-onsets: the earlier note
    is cut at the later onset and the later note inherits the larger of the
    two offsets. Chains are resolved in a single left-to-right pass.
    Two notes sharing pitch and onset collapse into the louder one (keeping
    the longer offset) and a warning is recorded.
    """
    by_pitch: dict[int, list[Note]] = {}
    for n in performance.notes:
        by_pitch.setdefault(n.pitch, []).append(n)

    out: list[Note] = []
    warnings: list[str] = []
    for pitch, notes in by_pitch.items():
        notes.sort(key=lambda n: (n.onset, -n.velocity, -n.offset))
        cur = notes[0]
        for nxt in notes[1:]:
            if nxt.onset == cur.onset:
                warnings.append(
                    f"duplicate note pitch={pitch} onset={cur.onset:.6f}: kept velocity {cur.velocity}, "
                    f"dropped velocity {nxt.velocity}"
                )
                cur = replace(cur, offset=max(cur.offset, nxt.offset))
            elif nxt.onset < cur.offset:
                late_off = max(cur.offset, nxt.offset)
                out.append(replace(cur, offset=nxt.onset))
                cur = replace(nxt, offset=late_off)
            else:
                out.append(cur)
                cur = nxt
        out.append(cur)

    for w in warnings:
        logger.warning(w)
    return performance.with_notes(out, warnings)
