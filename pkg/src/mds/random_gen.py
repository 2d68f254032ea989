"""Procedural synthesis of the Random benchmark set.

Each piece holds ``p`` parallel voices of back-to-back notes with uniformly
random pitch and velocity and Beta-distributed durations. Every note is
trimmed slightly at both ends, which opens small gaps in otherwise
continuous voices.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .midi import Note, Performance, merge_collisions, write_smf

logger = logging.getLogger(__name__)

# shortest note kept; anything shorter can collapse to zero ticks when written
MIN_NOTE_DURATION = 0.002


@dataclass(frozen=True)
class DynamicsLevel:
    id: int
    vel_min: int
    vel_max: int


DYNAMICS_LEVELS = {
    0: DynamicsLevel(0, 60, 68),
    1: DynamicsLevel(1, 32, 96),
    2: DynamicsLevel(2, 1, 127),
}
POLYPHONY_LEVELS = range(1, 25)


@dataclass(frozen=True)
class RandomGenConfig:
    polyphony: int = 1
    dynamics: DynamicsLevel = field(default_factory=lambda: DYNAMICS_LEVELS[0])
    duration: float = 120.0
    pitch_range: tuple[int, int] = (21, 108)
    min_note: float = 0.01
    max_note: float = 5.0
    beta_a: float = 2.0
    beta_b: float = 5.0
    trim_fraction_max: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.polyphony <= 24:
            raise ValueError(f"polyphony must be in 1..24, got {self.polyphony}")
        lo, hi = self.pitch_range
        if not 21 <= lo <= hi <= 108:
            raise ValueError(f"bad pitch range {self.pitch_range}")
        if self.duration < 0 or not 0 < self.min_note < self.max_note:
            raise ValueError("bad duration settings")
        if not 0 <= self.trim_fraction_max < 0.5:
            raise ValueError("trim fraction must be in [0, 0.5)")

    @property
    def mean_note(self) -> float:
        return self.min_note + (self.max_note - self.min_note) * self.beta_a / (self.beta_a + self.beta_b)


def plan_voice(config: RandomGenConfig, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Draw the untrimmed note grid of one voice.

    Returns ``(onsets, durations)``; durations are the raw draws from the
    scaled Beta distribution, before the last note is cut at the horizon.
    This consumes the first draws of ``rng``, so calling it on a fresh copy
    of a voice's generator reproduces that voice's schedule.
    """
    horizon = config.duration
    if horizon <= 0:
        return np.zeros(0), np.zeros(0)
    span = config.max_note - config.min_note
    batch = int(horizon / config.mean_note * 1.3) + 16
    durs = np.zeros(0)
    while durs.sum() < horizon:
        durs = np.concatenate([durs, config.min_note + span * rng.beta(config.beta_a, config.beta_b, batch)])
    ends = np.cumsum(durs)
    n = int(np.searchsorted(ends, horizon, side="left")) + 1
    durs = durs[:n]
    onsets = np.concatenate([[0.0], ends[: n - 1]])
    return onsets, durs


def generate_voice(config: RandomGenConfig, rng: np.random.Generator) -> list[Note]:
    onsets, durs = plan_voice(config, rng)
    n = len(onsets)
    if not n:
        return []
    offsets = np.minimum(onsets + durs, config.duration)
    length = offsets - onsets
    trim = rng.uniform(0.0, config.trim_fraction_max, size=(2, n))
    on = onsets + trim[0] * length
    off = offsets - trim[1] * length
    lo, hi = config.pitch_range
    pitches = rng.integers(lo, hi + 1, n)
    vels = rng.integers(config.dynamics.vel_min, config.dynamics.vel_max + 1, n)
    return [
        Note(int(p), float(a), float(b), int(v))
        for p, a, b, v in zip(pitches, on, off, vels)
        if b - a >= MIN_NOTE_DURATION
    ]


def _separate_pitches(notes: list[Note], config: RandomGenConfig, rng: np.random.Generator) -> list[Note]:
    """Re-draw pitches of notes that start while their pitch is already sounding.

    Notes are visited in onset order, so any same-pitch overlap is caught at
    the later note's onset. The re-draw is uniform over the free pitches,
    which keeps every note's pitch marginally uniform.
    """
    lo, hi = config.pitch_range
    busy_until = np.full(hi + 1, -np.inf)
    out = []
    for n in sorted(notes, key=lambda n: (n.onset, n.pitch)):
        pitch = n.pitch
        if busy_until[pitch] > n.onset:
            free = [q for q in range(lo, hi + 1) if busy_until[q] <= n.onset]
            pitch = int(rng.choice(free))
            n = replace(n, pitch=pitch)
        busy_until[pitch] = max(busy_until[pitch], n.offset)
        out.append(n)
    return out


def generate_piece(config: RandomGenConfig) -> Performance:
    seeds = np.random.SeedSequence(config.seed).spawn(config.polyphony + 1)
    rngs = [np.random.default_rng(s) for s in seeds]
    notes = [n for rng in rngs[:-1] for n in generate_voice(config, rng)]
    notes = _separate_pitches(notes, config, rngs[-1])
    perf = Performance(
        tuple(notes),
        source=f"rand_p{config.polyphony:02}_d{config.dynamics.id}",
        genre=None,
        polyphony=config.polyphony,
        dynamics=config.dynamics.id,
    )
    return merge_collisions(perf)


def piece_seed(base_seed: int, polyphony: int, dynamics: int) -> int:
    """Stable 64-bit sub-seed for one (p, d) cell, via numpy's SeedSequence hash."""
    state = np.random.SeedSequence([base_seed, polyphony, dynamics]).generate_state(1, np.uint64)
    return int(state[0])


def set_configs(base_seed: int, **overrides) -> list[RandomGenConfig]:
    return [
        RandomGenConfig(polyphony=p, dynamics=DYNAMICS_LEVELS[d], seed=piece_seed(base_seed, p, d), **overrides)
        for p in POLYPHONY_LEVELS
        for d in sorted(DYNAMICS_LEVELS)
    ]


def generate_set(base_seed: int, jobs: int = 1, **overrides) -> list[Performance]:
    """All 72 pieces, ordered by polyphony then dynamics."""
    configs = set_configs(base_seed, **overrides)
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            return list(pool.map(generate_piece, configs))
    return [generate_piece(c) for c in configs]


def write_set(out_dir, base_seed: int, jobs: int = 1, ppqn: int = 480) -> dict:
    """Generate the set into ``out_dir`` and write ``manifest.json`` next to the files."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    configs = set_configs(base_seed)
    pieces = generate_set(base_seed, jobs=jobs)
    entries = []
    for cfg, perf in zip(configs, pieces):
        name = f"rand_p{cfg.polyphony:02}_d{cfg.dynamics.id}.mid"
        (out / name).write_bytes(write_smf(perf, ppqn))
        entry = asdict(cfg)
        entry.update(file=name, notes=len(perf))
        entries.append(entry)
    manifest = {
        "base_seed": base_seed,
        "pieces": entries,
        "total_notes": sum(e["notes"] for e in entries),
        "total_hours": sum(c.duration for c in configs) / 3600,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    logger.info("wrote %d pieces, %d notes to %s", len(entries), manifest["total_notes"], out)
    return manifest


def voice_generators(config: RandomGenConfig) -> list[np.random.Generator]:
    """Fresh copies of the per-voice generators used by :func:`generate_piece`."""
    seeds = np.random.SeedSequence(config.seed).spawn(config.polyphony + 1)
    return [np.random.default_rng(s) for s in seeds[:-1]]


def untrimmed_durations(config: RandomGenConfig, exclude_last: bool = True) -> np.ndarray:
    """Raw Beta-scaled duration draws of a piece (diagnostics and fit tests)."""
    parts = []
    for rng in voice_generators(config):
        _, durs = plan_voice(config, rng)
        parts.append(durs[:-1] if exclude_last else durs)
    return np.concatenate(parts)
