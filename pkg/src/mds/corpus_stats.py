"""Descriptive statistics over MIDI corpora.

Covers pitch and pitch-class histograms, note density, polyphony
proportions, interval and chord counts, and velocity summaries. Per-piece
functions take a :class:`Performance`; corpus-level helpers take an
iterable of them.
"""

from __future__ import annotations

import itertools
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .midi import N_KEYS, PITCH_MIN, Performance, list_midi_files, load, polyphony_series

logger = logging.getLogger(__name__)

INTERVAL_LABELS = ("m2", "M2", "m3", "M3", "P4", "TT", "P5", "m6", "M6", "m7", "M7", "P8")
PC_LABELS = ("C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B")

TRIADS = {
    "Major": [{0, 4, 7}],
    "Minor": [{0, 3, 7}],
    "Diminished": [{0, 3, 6}],
    "Augmented": [{0, 4, 8}],
    "Suspended": [{0, 5, 7}, {0, 2, 7}],
}
SEVENTHS = {
    "Major7": [{0, 4, 7, 11}],
    "Dominant7": [{0, 4, 7, 10}],
    "Minor7": [{0, 3, 7, 10}],
    "Diminished7": [{0, 3, 6, 9}],
    "HalfDiminished7": [{0, 3, 6, 10}],
    "MinorMajor7": [{0, 3, 7, 11}],
}
SIMULTANEITY = 0.020
_EPS = 1e-9


@dataclass(frozen=True)
class Histogram:
    labels: tuple[str, ...]
    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def normalized(self) -> np.ndarray:
        t = self.counts.sum()
        return self.counts / t if t > 0 else np.zeros(len(self.counts))

    def to_dict(self) -> dict:
        return {
            "labels": list(self.labels),
            "counts": [int(c) for c in self.counts],
            "normalized": [float(x) for x in self.normalized()],
        }


@dataclass(frozen=True)
class VelocitySummary:
    histogram: Histogram
    mean: float
    median: float
    mode: int

    def to_dict(self) -> dict:
        return {"histogram": self.histogram.to_dict(), "mean": self.mean, "median": self.median, "mode": self.mode}


@dataclass(frozen=True)
class ChordCounts:
    triads: dict[str, int] = field(default_factory=lambda: dict.fromkeys(TRIADS, 0))
    sevenths: dict[str, int] = field(default_factory=lambda: dict.fromkeys(SEVENTHS, 0))
    other: int = 0

    def __add__(self, other: "ChordCounts") -> "ChordCounts":
        return ChordCounts(
            {k: self.triads[k] + other.triads[k] for k in TRIADS},
            {k: self.sevenths[k] + other.sevenths[k] for k in SEVENTHS},
            self.other + other.other,
        )

    def normalized(self) -> dict[str, dict[str, float]]:
        """Shares within each family; unmatched clusters are left out."""
        out = {}
        for name, counts in (("triads", self.triads), ("sevenths", self.sevenths)):
            t = sum(counts.values())
            out[name] = {k: (v / t if t else 0.0) for k, v in counts.items()}
        return out

    def to_dict(self) -> dict:
        return {"triads": dict(self.triads), "sevenths": dict(self.sevenths), "other": self.other,
                "normalized": self.normalized()}


def _nonempty(performances: Iterable[Performance]) -> list[Performance]:
    perfs = list(performances)
    if not any(len(p) for p in perfs):
        raise ValueError("no notes to analyse")
    return perfs


def pitch_histogram(performances: Iterable[Performance]) -> Histogram:
    perfs = _nonempty(performances)
    counts = np.zeros(N_KEYS, dtype=np.int64)
    for p in perfs:
        np.add.at(counts, p.arrays()[0] - PITCH_MIN, 1)
    return Histogram(tuple(str(PITCH_MIN + i) for i in range(N_KEYS)), counts)


def pitch_class_histogram(performances: Iterable[Performance]) -> Histogram:
    h = pitch_histogram(performances)
    counts = np.zeros(12, dtype=np.int64)
    np.add.at(counts, (np.arange(N_KEYS) + PITCH_MIN) % 12, h.counts)
    return Histogram(PC_LABELS, counts)


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("histograms have different bin counts")
    if (a < 0).any() or (b < 0).any():
        raise ValueError("histograms must be non-negative")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("cosine similarity of a zero vector")
    return float(min(1.0, a @ b / (na * nb)))


def note_density(performance: Performance) -> float:
    """Notes per second between the first onset and the last offset."""
    span = performance.end - performance.start
    if not len(performance) or span <= 0:
        raise ValueError("note density needs a piece with positive duration")
    return len(performance) / span


def polyphony_proportions(performance: Performance, max_level: int = 8, fps: int = 100) -> np.ndarray:
    """Share of sounding frames at each polyphony level 1..max_level (top level pooled)."""
    poly = polyphony_series(performance, fps)
    poly = poly[poly > 0]
    counts = np.bincount(np.minimum(poly, max_level), minlength=max_level + 1)[1:].astype(float)
    return counts / counts.sum() if counts.sum() else counts


def _simultaneous_pairs(performance: Performance, window: float):
    pitches, onsets = performance.arrays()[:2]
    j0 = 0
    for i in range(len(onsets)):
        # notes are sorted by onset
        while onsets[i] - onsets[j0] > window + _EPS:
            j0 += 1
        for j in range(j0, i):
            yield pitches[i], pitches[j]


def interval_counts(performance: Performance, window: float = SIMULTANEITY) -> Histogram:
    """Intervals between every pair of notes with onsets at most ``window`` apart, folded into one octave."""
    counts = np.zeros(12, dtype=np.int64)
    for a, b in _simultaneous_pairs(performance, window):
        d = abs(int(a) - int(b)) % 12
        counts[11 if d == 0 else d - 1] += 1
    return Histogram(INTERVAL_LABELS, counts)


def onset_clusters(performance: Performance, window: float = SIMULTANEITY) -> list[list[int]]:
    """Group note indices whose onsets lie within ``window`` of the group's first onset."""
    onsets = performance.arrays()[1]
    clusters: list[list[int]] = []
    start = None
    for i, t in enumerate(onsets):
        if start is None or t - start > window + _EPS:
            clusters.append([i])
            start = t
        else:
            clusters[-1].append(i)
    return clusters


def chord_label(pcs: Iterable[int]) -> Optional[str]:
    """Template name for a pitch-class set, trying every root; None when nothing fits."""
    pcs = {p % 12 for p in pcs}
    table = TRIADS if len(pcs) == 3 else SEVENTHS if len(pcs) == 4 else {}
    for root in sorted(pcs):
        shape = {(p - root) % 12 for p in pcs}
        for name, templates in table.items():
            if shape in templates:
                return name
    return None


def classify_chords(performance: Performance, window: float = SIMULTANEITY) -> ChordCounts:
    pitches = performance.arrays()[0]
    out = ChordCounts()
    other = 0
    for cluster in onset_clusters(performance, window):
        pcs = {int(pitches[i]) % 12 for i in cluster}
        if len(pcs) < 3:
            continue
        name = chord_label(pcs)
        if name in TRIADS:
            out.triads[name] += 1
        elif name in SEVENTHS:
            out.sevenths[name] += 1
        else:
            other += 1
    return ChordCounts(out.triads, out.sevenths, other)


def velocity_summary(performances: Iterable[Performance], bins: Optional[Sequence[int]] = None) -> VelocitySummary:
    """Velocity histogram (default: one bin per value 1..127) with mean, median and mode.

    ``bins`` are bin edges as accepted by ``numpy.histogram``. Ties for the
    mode go to the smallest velocity.
    """
    perfs = _nonempty(performances)
    v = np.concatenate([p.arrays()[3] for p in perfs])
    edges = np.arange(1, 129) if bins is None else np.asarray(bins)
    counts, edges = np.histogram(v, bins=edges)
    labels = tuple(f"{int(a)}" if b - a == 1 else f"{a:g}-{b:g}" for a, b in zip(edges, edges[1:]))
    per_value = np.bincount(v, minlength=128)
    return VelocitySummary(Histogram(labels, counts), float(v.mean()), float(np.median(v)),
                           int(np.argmax(per_value)))


# --- corpus report ---------------------------------------------------------

def group_report(performances: Sequence[Performance]) -> dict:
    """Plot-ready statistics for one group of pieces."""
    perfs = [p for p in performances if len(p)]
    densities = [note_density(p) for p in perfs if p.end > p.start]
    poly = np.mean([polyphony_proportions(p) for p in perfs], axis=0) if perfs else np.zeros(8)
    intervals = Histogram(INTERVAL_LABELS, sum((interval_counts(p).counts for p in perfs), np.zeros(12, np.int64)))
    chords = sum((classify_chords(p) for p in perfs), ChordCounts())
    return {
        "pieces": len(perfs),
        "notes": int(sum(len(p) for p in perfs)),
        "pitch_histogram": pitch_histogram(perfs).to_dict(),
        "pitch_class_histogram": pitch_class_histogram(perfs).to_dict(),
        "note_density": {"mean": float(np.mean(densities)), "per_piece": densities},
        "polyphony_proportions": {"levels": [str(i) for i in range(1, 8)] + ["8+"], "values": poly.tolist()},
        "intervals": intervals.to_dict(),
        "chords": chords.to_dict(),
        "velocity": velocity_summary(perfs).to_dict(),
    }


def mean_pairwise_similarity(histograms: dict[str, np.ndarray]) -> Optional[float]:
    pairs = list(itertools.combinations(sorted(histograms), 2))
    if not pairs:
        return None
    return float(np.mean([cosine_similarity(histograms[a], histograms[b]) for a, b in pairs]))


def analyze(groups: dict[str, Sequence[Performance]]) -> dict:
    reports = {g: group_report(perfs) for g, perfs in sorted(groups.items())}
    return {
        "groups": reports,
        "similarity": {
            key: mean_pairwise_similarity({g: np.array(r[key]["counts"]) for g, r in reports.items()})
            for key in ("pitch_histogram", "pitch_class_histogram")
        },
    }


def load_groups(in_dir, group_by: str = "genre") -> dict[str, list[Performance]]:
    """Load every MIDI file under ``in_dir``.

    With ``group_by="genre"`` the first directory level names the group;
    ``"none"`` puts everything in a single group called ``all``.
    """
    root = Path(in_dir)
    groups: dict[str, list[Performance]] = {}
    counter: Counter = Counter()
    for path in list_midi_files(root):
        rel = path.relative_to(root)
        if group_by == "genre":
            key = rel.parts[0] if len(rel.parts) > 1 else "ungrouped"
        elif group_by == "none":
            key = "all"
        else:
            raise ValueError(f"unknown grouping {group_by!r}")
        groups.setdefault(key, []).append(load(path))
        counter[key] += 1
    logger.info("loaded %s", dict(counter))
    return groups
