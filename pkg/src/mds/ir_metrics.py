"""Frame-level and note-level precision/recall/F1 for transcriptions.

Notes are matched one-to-one. Every onset, offset and velocity condition
is inclusive of its tolerance. Among all maximum-cardinality matchings,
the one with the smallest total absolute onset deviation is returned.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from .midi import Performance, PianoRoll, rasterize

logger = logging.getLogger(__name__)

EPS = 1e-9  # absorbs float noise at tolerance boundaries


class Variant(str, enum.Enum):
    ON = "on"
    ONOFF = "onoff"
    ONVEL = "onvel"
    ONOFFVEL = "onoffvel"

    @property
    def uses_offset(self) -> bool:
        return self in (Variant.ONOFF, Variant.ONOFFVEL)

    @property
    def uses_velocity(self) -> bool:
        return self in (Variant.ONVEL, Variant.ONOFFVEL)


@dataclass(frozen=True)
class MatchConfig:
    onset_tolerance: float = 0.05
    offset_min_tolerance: float = 0.05
    offset_ratio: float = 0.2
    velocity_tolerance: float = 0.1
    variant: Variant = Variant.ON

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        for name in ("onset_tolerance", "offset_min_tolerance", "velocity_tolerance"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.offset_ratio < 0:
            raise ValueError("offset_ratio must be non-negative")


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class Matching:
    pairs: tuple[tuple[int, int], ...]
    n_ref: int
    n_est: int
    warnings: tuple[str, ...] = field(default=(), compare=False)

    @property
    def tp(self) -> int:
        return len(self.pairs)

    @property
    def fp(self) -> int:
        return self.n_est - self.tp

    @property
    def fn(self) -> int:
        return self.n_ref - self.tp


def prf(tp: int, fp: int, fn: int) -> PRF:
    """PRF from counts. Nothing to find and nothing found scores 1; other zero denominators score 0."""
    if tp + fp + fn == 0:
        return PRF(1.0, 1.0, 1.0)
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return PRF(p, r, f)


def note_prf(matching: Matching) -> PRF:
    return prf(matching.tp, matching.fp, matching.fn)


def frame_prf(ref_roll: PianoRoll, est_roll: PianoRoll) -> PRF:
    if ref_roll.fps != est_roll.fps:
        raise ValueError(f"fps mismatch: {ref_roll.fps} vs {est_roll.fps}")
    n = max(ref_roll.n_frames, est_roll.n_frames)
    r = ref_roll.padded(n).astype(bool)
    e = est_roll.padded(n).astype(bool)
    tp = int(np.count_nonzero(r & e))
    return prf(tp, int(np.count_nonzero(e)) - tp, int(np.count_nonzero(r)) - tp)


def _edges_ok(ref_arrays, est_arrays, ri: np.ndarray, ej: np.ndarray, config: MatchConfig,
              est_vel: Optional[np.ndarray]) -> np.ndarray:
    """Boolean matrix of allowed (ri x ej) pairs; pitches are assumed equal."""
    _, ron, roff, rv = ref_arrays
    _, eon, eoff, _ = est_arrays
    ok = np.abs(ron[ri][:, None] - eon[ej][None, :]) <= config.onset_tolerance + EPS
    if config.variant.uses_offset:
        tol = np.maximum(config.offset_min_tolerance, config.offset_ratio * (roff[ri] - ron[ri]))
        ok &= np.abs(roff[ri][:, None] - eoff[ej][None, :]) <= tol[:, None] + EPS
    if config.variant.uses_velocity:
        ok &= np.abs(rv[ri][:, None] / 127.0 - est_vel[ej][None, :]) <= config.velocity_tolerance + EPS
    return ok


def _clusters(ron: np.ndarray, eon: np.ndarray, tol: float):
    """Split one pitch's notes into groups that no allowed edge can cross."""
    times = np.concatenate([ron, eon])
    side = np.concatenate([np.zeros(len(ron), int), np.ones(len(eon), int)])
    idx = np.concatenate([np.arange(len(ron)), np.arange(len(eon))])
    order = np.argsort(times, kind="stable")
    breaks = np.flatnonzero(np.diff(times[order]) > tol + EPS) + 1
    for grp in np.split(order, breaks):
        r = idx[grp][side[grp] == 0]
        e = idx[grp][side[grp] == 1]
        if len(r) and len(e):
            yield r, e


def match_notes(reference: Performance, estimate: Performance, config: MatchConfig = MatchConfig(),
                est_velocities: Optional[np.ndarray] = None) -> Matching:
    """Maximum one-to-one matching of reference and estimate notes.

    ``est_velocities`` are the estimate velocities already mapped to [0, 1];
    velocity variants compute them with :func:`rescale_velocities` when omitted.
    """
    warnings: tuple[str, ...] = ()
    if config.variant.uses_velocity and est_velocities is None:
        est_velocities, warnings = rescale_velocities(reference, estimate, config)
    ref_arrays, est_arrays = reference.arrays(), estimate.arrays()
    rp, ron = ref_arrays[:2]
    ep, eon = est_arrays[:2]
    pairs = []
    for pitch in np.intersect1d(rp, ep):
        r_all = np.flatnonzero(rp == pitch)
        e_all = np.flatnonzero(ep == pitch)
        for r_loc, e_loc in _clusters(ron[r_all], eon[e_all], config.onset_tolerance):
            ri, ej = r_all[r_loc], e_all[e_loc]
            ok = _edges_ok(ref_arrays, est_arrays, ri, ej, config, est_velocities)
            if not ok.any():
                continue
            dev = np.abs(ron[ri][:, None] - eon[ej][None, :])
            # every allowed edge beats any set of deviations, so cardinality wins first
            big = float(dev[ok].sum()) + 1.0
            cost = np.where(ok, dev - big, 0.0)
            rows, cols = linear_sum_assignment(cost)
            pairs.extend((int(ri[a]), int(ej[b])) for a, b in zip(rows, cols) if ok[a, b])
    return Matching(tuple(sorted(pairs)), len(reference), len(estimate), warnings)


def rescale_velocities(reference: Performance, estimate: Performance,
                       config: MatchConfig = MatchConfig()) -> tuple[np.ndarray, tuple[str, ...]]:
    """Map estimate velocities onto the reference's [0, 1] scale.

    A least-squares line is fitted from raw estimate velocity to reference
    velocity / 127 over onset-matched pairs, and the result is clipped to
    [0, 1]. With fewer than two pairs, or a constant estimate velocity among
    them, the mapping falls back to division by 127.
    """
    _, _, _, ev = estimate.arrays()
    m = match_notes(reference, estimate, replace(config, variant=Variant.ON))
    if m.tp >= 2:
        ri, ej = np.array(m.pairs).T
        x = ev[ej].astype(float)
        y = reference.arrays()[3][ri] / 127.0
        if np.ptp(x) > 0:
            slope, intercept = np.polyfit(x, y, 1)
            return np.clip(slope * ev + intercept, 0.0, 1.0), ()
    msg = f"velocity rescaling fell back to identity ({m.tp} onset matches)"
    logger.debug(msg)
    return ev / 127.0, (msg,)


NOTE_VARIANTS = (Variant.ON, Variant.ONOFF, Variant.ONVEL, Variant.ONOFFVEL)


def note_scores(reference: Performance, estimate: Performance,
                config: MatchConfig = MatchConfig()) -> tuple[dict[Variant, PRF], tuple[str, ...]]:
    """PRF for all four variants, sharing one velocity fit."""
    scaled, warnings = rescale_velocities(reference, estimate, config)
    out = {}
    for v in NOTE_VARIANTS:
        out[v] = note_prf(match_notes(reference, estimate, replace(config, variant=v), scaled))
    return out, warnings


def transcription_scores(reference: Performance, estimate: Performance, fps: int = 100,
                         config: MatchConfig = MatchConfig()) -> tuple[dict[str, float], tuple[str, ...]]:
    """Flat ``{metric_name: value}`` dict with frame and note-level PRF."""
    out = {}
    fr = frame_prf(rasterize(reference, fps), rasterize(estimate, fps))
    for k in ("precision", "recall", "f1"):
        out[f"frame_{k}"] = getattr(fr, k)
    notes, warnings = note_scores(reference, estimate, config)
    for v, s in notes.items():
        for k in ("precision", "recall", "f1"):
            out[f"note_{v.value}_{k}"] = getattr(s, k)
    return out, warnings
