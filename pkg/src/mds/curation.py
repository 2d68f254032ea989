"""Candidate filtering and per-genre sampling for the Genre set."""

from __future__ import annotations

import json
import logging
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .midi import Performance, list_midi_files, merge_collisions, polyphony_series, write_smf
from .midi.smf import MidiParseError, performance_from_smf, read_smf

logger = logging.getLogger(__name__)

PIANO_PROGRAMS = range(0, 8)  # GM acoustic/electric pianos, harpsichord, clavinet
DRUM_CHANNEL = 9


@dataclass(frozen=True)
class CurationStats:
    duration: float
    gap_total: float
    avg_polyphony: float
    unique_velocities: int
    unique_pitches: int
    has_non_piano: bool
    has_pitch_bend: bool


@dataclass(frozen=True)
class FilterConfig:
    min_duration: float = 120.0
    max_duration: float = 240.0
    max_gap_total: float = 5.0
    min_avg_polyphony: float = 3.0
    min_unique_velocities: int = 20
    min_unique_pitches: int = 15
    forbid_non_piano: bool = True
    forbid_pitch_bend: bool = True


@dataclass(frozen=True)
class FilterDecision:
    accepted: bool
    violations: tuple[str, ...] = ()


def gap_total(performance: Performance) -> float:
    """Seconds between first onset and last offset with no note sounding."""
    if not performance.notes:
        return 0.0
    total = 0.0
    covered_until = performance.notes[0].onset
    for n in performance.notes:  # sorted by onset
        if n.onset > covered_until:
            total += n.onset - covered_until
        covered_until = max(covered_until, n.offset)
    return total


def stats_from_performance(performance: Performance, has_non_piano=False, has_pitch_bend=False,
                           fps: int = 100) -> CurationStats:
    perf = merge_collisions(performance)
    if perf.notes:
        poly = polyphony_series(perf, fps)
        sounding = poly[poly > 0]
        avg_poly = float(sounding.mean()) if len(sounding) else 0.0
        duration = perf.end - perf.start
    else:
        avg_poly = duration = 0.0
    return CurationStats(
        duration=duration,
        gap_total=gap_total(perf),
        avg_polyphony=avg_poly,
        unique_velocities=len({n.velocity for n in perf}),
        unique_pitches=len({n.pitch for n in perf}),
        has_non_piano=has_non_piano,
        has_pitch_bend=has_pitch_bend,
    )


def piece_stats(data: bytes, source: Optional[str] = None) -> CurationStats:
    """Curation statistics of a raw MIDI file.

    Parse errors propagate. Average polyphony is taken over 100 fps frames
    in which at least one note sounds.
    """
    smf = read_smf(data)
    non_piano = pitch_bend = False
    for ev in smf.events():
        kind = ev.kind
        if kind == 0xC0 and ev.data[0] not in PIANO_PROGRAMS:
            non_piano = True
        elif kind == 0x90 and ev.channel == DRUM_CHANNEL and ev.data[1] > 0:
            non_piano = True
        elif kind == 0xE0:
            pitch_bend = True
    return stats_from_performance(performance_from_smf(smf, source), non_piano, pitch_bend)


def passes_filter(stats: CurationStats, config: FilterConfig = FilterConfig()) -> FilterDecision:
    """Check every rule; all violations are reported. Thresholds are inclusive on the accepting side."""
    v = []
    if not config.min_duration <= stats.duration <= config.max_duration:
        v.append("duration")
    if stats.gap_total > config.max_gap_total:
        v.append("gaps")
    if stats.avg_polyphony < config.min_avg_polyphony:
        v.append("polyphony")
    if stats.unique_velocities < config.min_unique_velocities:
        v.append("velocities")
    if stats.unique_pitches < config.min_unique_pitches:
        v.append("pitches")
    if config.forbid_non_piano and stats.has_non_piano:
        v.append("non_piano")
    if config.forbid_pitch_bend and stats.has_pitch_bend:
        v.append("pitch_bend")
    return FilterDecision(not v, tuple(v))


class NotEnoughCandidates(ValueError):
    def __init__(self, genre: str, available: int, needed: int):
        super().__init__(f"genre {genre!r} has {available} accepted candidates, {needed} needed")
        self.genre = genre


@dataclass
class Selection:
    picks: dict[str, list[str]] = field(default_factory=dict)
    counts: dict[str, dict[str, int]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"picks": self.picks, "counts": self.counts}


def _genre_rng(seed: int, genre: str) -> np.random.Generator:
    return np.random.default_rng([seed, zlib.crc32(genre.encode("utf-8"))])


def sample_per_genre(
    accepted: Mapping[str, Sequence[str]],
    n: int = 10,
    seed: int = 0,
    before_counts: Optional[Mapping[str, int]] = None,
) -> Selection:
    """Pick ``n`` distinct candidates per genre, reproducibly for a given seed.

    ``before_counts`` are the pre-filter candidate counts; they go into the
    selection's count table next to the accepted counts.
    """
    sel = Selection()
    for genre in sorted(accepted):
        ids = sorted(set(accepted[genre]))
        if len(ids) < n:
            raise NotEnoughCandidates(genre, len(ids), n)
        idx = _genre_rng(seed, genre).choice(len(ids), size=n, replace=False)
        sel.picks[genre] = sorted(ids[i] for i in idx)
        before = before_counts.get(genre, len(ids)) if before_counts else len(ids)
        sel.counts[genre] = {"before": int(before), "after": len(ids)}
    return sel


def _file_stats(path: Path):
    try:
        return piece_stats(path.read_bytes(), str(path))
    except MidiParseError as exc:
        return exc


def curate_directory(in_dir, genres: Iterable[str], out_dir, n: int = 10, seed: int = 0, jobs: int = 1,
                     filter_config: FilterConfig = FilterConfig()) -> dict:
    """Filter ``in_dir/<genre>/**.mid``, sample ``n`` per genre and write merged files to ``out_dir``.

    Selected files are flattened to one note list with same-pitch collisions
    merged, then written as format-0 files. Returns (and writes) the manifest.
    """
    in_dir, out_dir = Path(in_dir), Path(out_dir)
    genres = list(genres)
    files = {g: list_midi_files(in_dir / g) for g in genres}
    flat = [p for g in genres for p in files[g]]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            results = list(pool.map(_file_stats, flat, chunksize=8))
    else:
        results = [_file_stats(p) for p in flat]
    reports = []
    for path, res in zip(flat, results):
        if isinstance(res, MidiParseError):
            reports.append({"file": str(path), "accepted": False, "violations": ["parse_error"], "error": str(res)})
            continue
        d = passes_filter(res, filter_config)
        reports.append({"file": str(path), "accepted": d.accepted, "violations": list(d.violations),
                        "stats": asdict(res)})
    by_file = {r["file"]: r for r in reports}

    accepted = {g: [str(p) for p in files[g] if by_file[str(p)]["accepted"]] for g in genres}
    selection = sample_per_genre(accepted, n=n, seed=seed, before_counts={g: len(files[g]) for g in genres})

    out_dir.mkdir(parents=True, exist_ok=True)
    written = {}
    for genre, picks in selection.picks.items():
        (out_dir / genre).mkdir(exist_ok=True)
        written[genre] = []
        for src in picks:
            perf = merge_collisions(performance_from_smf(read_smf(Path(src).read_bytes()), src))
            dest = out_dir / genre / (Path(src).stem + ".mid")
            dest.write_bytes(write_smf(perf))
            written[genre].append(str(dest))

    manifest = {
        "seed": seed,
        "n": n,
        "filter": asdict(filter_config),
        "counts": selection.counts,
        "selected": selection.picks,
        "written": written,
        "files": reports,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return manifest

