"""Piano-roll rasterization and per-frame polyphony."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .notes import N_KEYS, PITCH_MIN, Performance


@dataclass(frozen=True)
class PianoRoll:
    fps: int
    matrix: np.ndarray  # (88, T) uint8, row 0 is A0

    @property
    def n_frames(self) -> int:
        return self.matrix.shape[1]

    def padded(self, n_frames: int) -> np.ndarray:
        if n_frames < self.n_frames:
            raise ValueError("cannot pad to fewer frames")
        out = np.zeros((N_KEYS, n_frames), dtype=self.matrix.dtype)
        out[:, : self.n_frames] = self.matrix
        return out


def _round(x: np.ndarray) -> np.ndarray:
    # half-up rounding; numpy's default is half-to-even
    return np.floor(x + 0.5).astype(np.int64)


def frame_spans(performance: Performance, fps: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(row, start, stop)`` frame spans, one per note.

    A note covers frames ``round(onset*fps) <= f < round(offset*fps)`` and at
    least one frame.
    """
    if fps <= 0:
        raise ValueError("fps must be positive")
    pitches, onsets, offsets, _ = performance.arrays()
    start = _round(onsets * fps)
    stop = np.maximum(_round(offsets * fps), start + 1)
    return pitches - PITCH_MIN, start, stop


def _n_frames(performance: Performance, fps: int, stop: np.ndarray) -> int:
    if not len(stop):
        return 0
    # the tolerance keeps e.g. 0.1 s * 100 fps from becoming 11 frames
    return max(math.ceil(performance.end * fps - 1e-9), int(stop.max()))


def rasterize(performance: Performance, fps: int = 100) -> PianoRoll:
    rows, start, stop = frame_spans(performance, fps)
    n_frames = _n_frames(performance, fps, stop)
    matrix = np.zeros((N_KEYS, n_frames), dtype=np.uint8)
    for r, a, b in zip(rows, start, stop):
        matrix[r, a:b] = 1
    return PianoRoll(fps=fps, matrix=matrix)


def polyphony_series(performance: Performance, fps: int = 100) -> np.ndarray:
    """Number of notes sounding in each frame, using the rasterization rule.

    Equals the column sum of :func:`rasterize` whenever no two notes of the
    same pitch share a frame.
    """
    _, start, stop = frame_spans(performance, fps)
    n_frames = _n_frames(performance, fps, stop)
    diff = np.zeros(n_frames + 1, dtype=np.int64)
    np.add.at(diff, start, 1)
    np.add.at(diff, stop, -1)
    return np.cumsum(diff[:-1])
