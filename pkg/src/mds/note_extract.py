"""Turn frame-wise pitch activations into notes with a two-state HMM.

Every pitch row is decoded on its own. The activation of a frame serves as
the likelihood of the "on" state and its complement as that of "off".

Activation files come in two layouts:

* CSV: a first line ``rows,cols,frame_duration`` followed by ``rows`` lines
  of ``cols`` comma-separated values.
* Binary: the 8-byte magic ``MDSACT1\\0``, little-endian ``uint32`` rows,
  ``uint32`` cols, ``float64`` frame duration, then ``rows*cols``
  little-endian ``float32`` values in row-major order.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .midi import PITCH_MIN, Note, Performance

MAGIC = b"MDSACT1\0"
_HEADER = struct.Struct("<IId")


@dataclass(frozen=True)
class NoteHmmConfig:
    p_off_to_on: float = 0.30
    p_on_to_off: float = 0.05
    frame_duration: float = 0.032
    p_initial_on: float = 0.5
    velocity: int = 64

    def __post_init__(self):
        for name in ("p_off_to_on", "p_on_to_off", "p_initial_on"):
            if not 0 < getattr(self, name) < 1:
                raise ValueError(f"{name} must be in (0, 1)")
        if self.frame_duration <= 0:
            raise ValueError("frame_duration must be positive")

    def log_transitions(self) -> np.ndarray:
        """``[from, to]`` log-probabilities, state 0 = off, 1 = on."""
        t = np.array([[1 - self.p_off_to_on, self.p_off_to_on],
                      [self.p_on_to_off, 1 - self.p_on_to_off]])
        return np.log(t)


@dataclass(frozen=True)
class ActivationMatrix:
    values: np.ndarray  # (rows, frames) float
    frame_duration: float = 0.032

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise ValueError("activation matrix must be 2-D")
        if self.frame_duration <= 0:
            raise ValueError("frame_duration must be positive")
        object.__setattr__(self, "values", v)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def clipped(self) -> np.ndarray:
        return np.clip(np.nan_to_num(self.values, nan=0.0), 0.0, 1.0)


def _log(x: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(x)


def viterbi_decode_rows(activations: np.ndarray, config: NoteHmmConfig = NoteHmmConfig()) -> np.ndarray:
    """Most likely on/off path for each row of a (rows, T) array; returns bool (rows, T)."""
    a = np.clip(np.atleast_2d(np.asarray(activations, dtype=float)), 0.0, 1.0)
    rows, T = a.shape
    path = np.zeros((rows, T), dtype=bool)
    if T == 0:
        return path
    log_emit = np.stack([_log(1 - a), _log(a)], axis=-1)  # (rows, T, 2)
    lt = config.log_transitions()
    score = np.log([1 - config.p_initial_on, config.p_initial_on]) + log_emit[:, 0]
    back = np.zeros((rows, T, 2), dtype=bool)  # True: best predecessor is "on"
    for t in range(1, T):
        # cand[r, from, to]
        cand = score[:, :, None] + lt[None]
        from_on = cand[:, 1] > cand[:, 0]  # ties keep "off"
        back[:, t] = from_on
        score = np.where(from_on, cand[:, 1], cand[:, 0]) + log_emit[:, t]
    state = score[:, 1] > score[:, 0]
    r = np.arange(rows)
    for t in range(T - 1, -1, -1):
        path[:, t] = state
        state = back[r, t, state.astype(int)]
    return path


def viterbi_decode(row, config: NoteHmmConfig = NoteHmmConfig()) -> np.ndarray:
    """Decode a single activation row to a boolean state sequence."""
    row = np.asarray(row, dtype=float).ravel()
    return viterbi_decode_rows(row[None, :], config)[0]


def path_log_prob(row, path, config: NoteHmmConfig = NoteHmmConfig()) -> float:
    """Joint log-probability of a state path and the observed row."""
    a = np.clip(np.asarray(row, dtype=float), 0.0, 1.0)
    s = np.asarray(path, dtype=int)
    if len(s) == 0:
        return 0.0
    lt = config.log_transitions()
    emit = _log(np.where(s == 1, a, 1 - a))
    init = np.log([1 - config.p_initial_on, config.p_initial_on])[s[0]]
    return float(init + emit.sum() + lt[s[:-1], s[1:]].sum())


def runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Maximal ``True`` runs as (start, stop) frame index pairs."""
    m = np.concatenate([[False], np.asarray(mask, bool), [False]])
    edges = np.flatnonzero(np.diff(m.astype(np.int8)))
    return list(zip(edges[::2].tolist(), edges[1::2].tolist()))


def activations_to_notes(matrix: ActivationMatrix, config: NoteHmmConfig = NoteHmmConfig(),
                         lowest_pitch: int = PITCH_MIN, source: str | None = None) -> Performance:
    """Decode every row; row ``i`` is MIDI pitch ``lowest_pitch + i``."""
    rows = matrix.shape[0]
    if lowest_pitch + rows - 1 > 108 or lowest_pitch < PITCH_MIN:
        raise ValueError(f"{rows} rows starting at pitch {lowest_pitch} leave the piano range")
    states = viterbi_decode_rows(matrix.clipped(), config)
    fd = matrix.frame_duration
    notes = [
        Note(lowest_pitch + r, start * fd, stop * fd, config.velocity)
        for r in range(rows)
        for start, stop in runs(states[r])
    ]
    return Performance(tuple(notes), source=source)


# --- file formats ----------------------------------------------------------

def write_activations(path, matrix: ActivationMatrix) -> None:
    path = Path(path)
    rows, cols = matrix.shape
    if path.suffix.lower() == ".csv":
        buf = io.StringIO()
        buf.write(f"{rows},{cols},{matrix.frame_duration!r}\n")
        np.savetxt(buf, matrix.values.reshape(rows, cols), delimiter=",", fmt="%.9g")
        path.write_text(buf.getvalue())
    else:
        data = matrix.values.astype("<f4").tobytes(order="C")
        path.write_bytes(MAGIC + _HEADER.pack(rows, cols, matrix.frame_duration) + data)


def read_activations(path) -> ActivationMatrix:
    """Load a CSV (``.csv`` suffix) or binary activation file; malformed input raises ValueError."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        text = path.read_text()
        head, _, body = text.partition("\n")
        try:
            r, c, fd = head.split(",")
            rows, cols, frame = int(r), int(c), float(fd)
        except ValueError as exc:
            raise ValueError(f"bad activation header {head!r}") from exc
        values = np.loadtxt(io.StringIO(body), delimiter=",", ndmin=2) if body.strip() else np.zeros((0, 0))
        if rows * cols == 0:
            values = np.zeros((rows, cols))
        if values.shape != (rows, cols):
            raise ValueError(f"header says {rows}x{cols}, body is {values.shape[0]}x{values.shape[1]}")
        return ActivationMatrix(values, frame)
    raw = path.read_bytes()
    if raw[:8] != MAGIC:
        raise ValueError("not an activation file (bad magic)")
    if len(raw) < 8 + _HEADER.size:
        raise ValueError("truncated activation header")
    rows, cols, frame = _HEADER.unpack_from(raw, 8)
    body = raw[8 + _HEADER.size:]
    if len(body) != 4 * rows * cols:
        raise ValueError(f"expected {4 * rows * cols} value bytes, found {len(body)}")
    values = np.frombuffer(body, dtype="<f4").astype(float).reshape(rows, cols)
    return ActivationMatrix(values, frame)


__all__ = [
    "ActivationMatrix",
    "NoteHmmConfig",
    "activations_to_notes",
    "path_log_prob",
    "read_activations",
    "runs",
    "viterbi_decode",
    "viterbi_decode_rows",
    "write_activations",
]
