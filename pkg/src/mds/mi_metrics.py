"""Musically informed comparisons between a reference and a transcription.

Each metric reduces both performances to a series (inter-onset intervals,
key-overlap ratios, spiral-array tension, melody/bass loudness ratios) and
reports the Pearson correlation of the two series. When a correlation
cannot be computed, :class:`UndefinedMetric` is raised with a short reason.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np

from .ir_metrics import MatchConfig, Variant, match_notes
from .midi import Note, Performance

StreamKind = Literal["melody", "bass", "accompaniment"]
TensionKind = Literal["cloud_diameter", "cloud_momentum", "tensile_strain"]
TENSION_KINDS: tuple[TensionKind, ...] = ("cloud_diameter", "cloud_momentum", "tensile_strain")


class UndefinedMetric(ValueError):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


@dataclass(frozen=True)
class MiConfig:
    window: float = 2.0
    hop: float = 1.0
    radius: float = 1.0
    rise: float = math.sqrt(2 / 15)
    min_matches: int = 4
    min_windows: int = 4
    onset_tolerance: float = 0.05

    def __post_init__(self):
        if self.window <= 0 or self.hop <= 0:
            raise ValueError("window and hop must be positive")
        if self.radius <= 0 or self.rise <= 0:
            raise ValueError("spiral radius and rise must be positive")


@dataclass(frozen=True)
class StreamDecomposition:
    melody: Performance
    bass: Performance
    accompaniment: Performance

    def __getitem__(self, kind: str) -> Performance:
        if kind not in ("melody", "bass", "accompaniment"):
            raise KeyError(kind)
        return getattr(self, kind)


def separate_streams(performance: Performance) -> StreamDecomposition:
    """Skyline split: a note is melody if it is the highest note sounding at its
    onset, bass if it is the lowest. A note sounding alone is both.
    """
    notes = performance.notes
    melody, bass, rest = [], [], []
    active: list[Note] = []
    i = 0
    while i < len(notes):
        t = notes[i].onset
        j = i
        while j < len(notes) and notes[j].onset == t:
            j += 1
        starters = notes[i:j]
        active = [n for n in active if n.offset > t] + list(starters)
        hi = max(n.pitch for n in active)
        lo = min(n.pitch for n in active)
        for n in starters:
            top, bottom = n.pitch == hi, n.pitch == lo
            if top:
                melody.append(n)
            if bottom:
                bass.append(n)
            if not (top or bottom):
                rest.append(n)
        i = j
    return StreamDecomposition(*(performance.with_notes(tuple(s)) for s in (melody, bass, rest)))


def pearson(x, y) -> float:
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if len(x) != len(y):
        raise ValueError("series lengths differ")
    if len(x) < 2:
        raise UndefinedMetric(f"only {len(x)} values")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise UndefinedMetric("zero variance")
    dx, dy = x - x.mean(), y - y.mean()
    r = float(dx @ dy / math.sqrt(float(dx @ dx) * float(dy @ dy)))
    return max(-1.0, min(1.0, r))


def _matched_stream(reference: Performance, estimate: Performance, stream: str, config: MiConfig):
    """Onset-matched note pairs within one stream, ordered by reference onset."""
    ref_s = separate_streams(reference)[stream]
    est_s = separate_streams(estimate)[stream]
    m = match_notes(ref_s, est_s, MatchConfig(onset_tolerance=config.onset_tolerance, variant=Variant.ON))
    if m.tp < config.min_matches:
        raise UndefinedMetric(f"{m.tp} matched {stream} notes, {config.min_matches} needed")
    pairs = sorted(m.pairs, key=lambda p: (ref_s.notes[p[0]].onset, ref_s.notes[p[0]].pitch))
    return [ref_s.notes[i] for i, _ in pairs], [est_s.notes[j] for _, j in pairs]


def ioi_correlation(reference: Performance, estimate: Performance, stream: StreamKind = "melody",
                    config: MiConfig = MiConfig()) -> float:
    ref, est = _matched_stream(reference, estimate, stream, config)
    r_ioi = np.diff([n.onset for n in ref])
    e_ioi = np.diff([n.onset for n in est])
    return pearson(r_ioi, e_ioi)


def kor_series(notes: list[Note]) -> np.ndarray:
    """Key-overlap ratio per consecutive pair; NaN where the onsets coincide."""
    out = np.full(max(len(notes) - 1, 0), np.nan)
    for k, (a, b) in enumerate(zip(notes, notes[1:])):
        ioi = b.onset - a.onset
        if ioi != 0:
            out[k] = (b.onset - a.offset) / ioi
    return out


def kor_correlation(reference: Performance, estimate: Performance, stream: StreamKind = "melody",
                    config: MiConfig = MiConfig()) -> float:
    ref, est = _matched_stream(reference, estimate, stream, config)
    r, e = kor_series(ref), kor_series(est)
    keep = ~(np.isnan(r) | np.isnan(e))
    return pearson(r[keep], e[keep])


# --- spiral array ----------------------------------------------------------

def fifths_index(pc: int) -> int:
    """Position of a pitch class on the line of fifths, C = 0, F = -1, G = 1 (range -5..6)."""
    return (pc * 7 + 5) % 12 - 5


def spiral_position(pc: int, config: MiConfig = MiConfig()) -> np.ndarray:
    k = fifths_index(pc)
    return np.array([config.radius * math.sin(k * math.pi / 2),
                     config.radius * math.cos(k * math.pi / 2),
                     k * config.rise])


def _positions(config: MiConfig) -> np.ndarray:
    return np.stack([spiral_position(pc, config) for pc in range(12)])


def window_starts(end: float, config: MiConfig = MiConfig()) -> np.ndarray:
    """Window starts covering [0, end]; at least one window."""
    n = 1 if end <= config.window else int(math.ceil((end - config.window) / config.hop - 1e-9)) + 1
    return np.arange(n) * config.hop


def _overlaps(performance: Performance, starts: np.ndarray, config: MiConfig) -> np.ndarray:
    """(n_windows, n_notes) overlap durations in seconds."""
    _, on, off, _ = performance.arrays()
    lo = np.maximum(on[None, :], starts[:, None])
    hi = np.minimum(off[None, :], starts[:, None] + config.window)
    return np.clip(hi - lo, 0.0, None)


def tension_series(performance: Performance, kind: TensionKind, config: MiConfig = MiConfig(),
                   end: Optional[float] = None) -> np.ndarray:
    """Per-window spiral-array tension; ``end`` fixes the span so two pieces share windows."""
    if kind not in TENSION_KINDS:
        raise ValueError(f"unknown tension kind {kind!r}")
    end = performance.end if end is None else end
    starts = window_starts(end, config)
    pos = _positions(config)
    pitches, on, off, _ = performance.arrays()
    note_pos = pos[pitches % 12] if len(pitches) else np.zeros((0, 3))
    w = _overlaps(performance, starts, config)
    durs = off - on
    piece_center = (durs @ note_pos / durs.sum()) if durs.sum() > 0 else np.zeros(3)

    out = np.zeros(len(starts))
    prev = None
    for k in range(len(starts)):
        weights = w[k]
        total = weights.sum()
        if total > 0:
            center = weights @ note_pos / total
            if kind == "cloud_diameter":
                pcs = np.unique(pitches[weights > 0] % 12)
                p = pos[pcs]
                d = np.sqrt(((p[:, None, :] - p[None, :, :]) ** 2).sum(-1))
                out[k] = d.max()
        else:
            center = prev if prev is not None else piece_center
        if kind == "cloud_momentum":
            out[k] = 0.0 if prev is None else float(np.linalg.norm(center - prev))
        elif kind == "tensile_strain":
            out[k] = float(np.linalg.norm(center - piece_center))
        prev = center
    return out


def harmony_correlation(reference: Performance, estimate: Performance, kind: TensionKind,
                        config: MiConfig = MiConfig()) -> float:
    end = max(reference.end, estimate.end)
    return pearson(tension_series(reference, kind, config, end), tension_series(estimate, kind, config, end))


# --- dynamics --------------------------------------------------------------

def loudness_ratios(performance: Performance, config: MiConfig = MiConfig(),
                    end: Optional[float] = None) -> np.ndarray:
    """Melody over bass loudness per window, NaN where the bass is silent.

    Loudness is the sum of squared normalized velocities of the stream's
    notes sounding in the window.
    """
    end = performance.end if end is None else end
    starts = window_starts(end, config)
    streams = separate_streams(performance)
    loud = []
    for s in (streams.melody, streams.bass):
        energy = (s.arrays()[3] / 127.0) ** 2
        loud.append((_overlaps(s, starts, config) > 0).astype(float) @ energy)
    mel, bass = loud
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(bass > 0, mel / np.where(bass > 0, bass, 1.0), np.nan)


def dynamics_correlation(reference: Performance, estimate: Performance, config: MiConfig = MiConfig()) -> float:
    end = max(reference.end, estimate.end)
    r = loudness_ratios(reference, config, end)
    e = loudness_ratios(estimate, config, end)
    keep = ~(np.isnan(r) | np.isnan(e))
    if keep.sum() < config.min_windows:
        raise UndefinedMetric(f"{int(keep.sum())} windows with bass on both sides, {config.min_windows} needed")
    return pearson(r[keep], e[keep])


MI_METRICS = (
    "articulation_melody_kor",
    "articulation_bass_kor",
    "timing_melody_ioi",
    "timing_accompaniment_ioi",
    "harmony_cloud_diameter",
    "harmony_cloud_momentum",
    "harmony_tensile_strain",
    "dynamics_loudness_ratio",
)


def musical_scores(reference: Performance, estimate: Performance,
                   config: MiConfig = MiConfig()) -> tuple[dict[str, Optional[float]], dict[str, str]]:
    """All musically informed metrics; undefined ones are None with a reason."""
    calls = {
        "articulation_melody_kor": lambda: kor_correlation(reference, estimate, "melody", config),
        "articulation_bass_kor": lambda: kor_correlation(reference, estimate, "bass", config),
        "timing_melody_ioi": lambda: ioi_correlation(reference, estimate, "melody", config),
        "timing_accompaniment_ioi": lambda: ioi_correlation(reference, estimate, "accompaniment", config),
        **{f"harmony_{k}": (lambda k=k: harmony_correlation(reference, estimate, k, config)) for k in TENSION_KINDS},
        "dynamics_loudness_ratio": lambda: dynamics_correlation(reference, estimate, config),
    }
    values: dict[str, Optional[float]] = {}
    reasons: dict[str, str] = {}
    for name in MI_METRICS:
        try:
            values[name] = calls[name]()
        except UndefinedMetric as exc:
            values[name] = None
            reasons[name] = exc.reason
    return values, reasons

