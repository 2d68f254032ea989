"""Pair references with transcriptions and compute the result grid."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from ..ir_metrics import transcription_scores
from ..mi_metrics import musical_scores
from ..midi import MidiParseError, Performance, load, merge_collisions
from .config import RunConfig
from .records import METRICS, MetricRecord, sort_records

logger = logging.getLogger(__name__)


def evaluate_pair(reference: Performance, estimate: Performance,
                  config: RunConfig = RunConfig()) -> tuple[dict[str, Optional[float]], dict[str, str]]:
    """Every grid metric for one (reference, estimate) pair.

    Both sides have same-pitch collisions merged first, so matching sees
    the same note sets a synthesizer would play.
    """
    ref, est = merge_collisions(reference), merge_collisions(estimate)
    values: dict[str, Optional[float]] = {}
    reasons: dict[str, str] = {}
    ir, warnings = transcription_scores(ref, est, config.fps, config.match_config())
    values.update(ir)
    mi, mi_reasons = musical_scores(ref, est, config.mi_config())
    values.update(mi)
    reasons.update(mi_reasons)
    for w in warnings:
        logger.debug("%s: %s", estimate.source, w)
    return {m: values.get(m) for m in METRICS}, reasons


@dataclass(frozen=True)
class PieceEntry:
    id: str
    subset: str
    reference: Path
    estimates: dict[str, Path] = field(default_factory=dict)
    genre: Optional[str] = None
    polyphony: Optional[int] = None
    dynamics: Optional[int] = None


@dataclass(frozen=True)
class Manifest:
    pieces: tuple[PieceEntry, ...]
    systems: tuple[str, ...]


def parse_manifest(doc: dict, base_dir=".") -> Manifest:
    """Build a manifest from its JSON form.

    Layout::

        {"systems": ["A", "B"],            # optional, default: all named below
         "pieces": [{"id": "jazz_01", "subset": "Genre", "genre": "Jazz",
                     "reference": "gt/jazz_01.mid",
                     "estimates": {"A": "A/jazz_01.mid", "B": "B/jazz_01.mid"}}]}

    Relative paths are resolved against ``base_dir``.
    """
    base = Path(base_dir)
    if not isinstance(doc, dict) or not isinstance(doc.get("pieces"), list):
        raise ValueError("manifest needs a 'pieces' list")
    pieces = []
    seen = set()
    for i, p in enumerate(doc["pieces"]):
        try:
            pid, subset, ref = str(p["id"]), str(p["subset"]), p["reference"]
        except (KeyError, TypeError):
            raise ValueError(f"manifest piece {i} needs id, subset and reference") from None
        if (subset, pid) in seen:
            raise ValueError(f"duplicate piece {subset}/{pid}")
        seen.add((subset, pid))
        pieces.append(PieceEntry(
            pid, subset, base / ref,
            {str(s): base / e for s, e in (p.get("estimates") or {}).items()},
            p.get("genre"), p.get("polyphony"), p.get("dynamics"),
        ))
    systems = doc.get("systems") or sorted({s for p in pieces for s in p.estimates})
    return Manifest(tuple(sorted(pieces, key=lambda p: (p.subset, p.id))), tuple(sorted(map(str, systems))))


def load_manifest(path) -> Manifest:
    p = Path(path)
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"manifest {p} is not valid JSON: {exc}") from exc
    return parse_manifest(doc, p.parent)


def _load(path: Path, what: str) -> Performance:
    if not path.is_file():
        raise FileNotFoundError(f"missing {what} {path}")
    return load(path)


def evaluate_entry(piece: PieceEntry, system: str, config: RunConfig = RunConfig()) -> MetricRecord:
    """One grid record; unreadable or missing files become an error record."""
    rec = dict(piece=piece.id, system=system, subset=piece.subset, genre=piece.genre,
               polyphony=piece.polyphony, dynamics=piece.dynamics)
    try:
        est_path = piece.estimates.get(system)
        if est_path is None:
            raise FileNotFoundError(f"no estimate listed for system {system}")
        ref = _load(piece.reference, "reference")
        est = _load(est_path, "estimate")
    except (OSError, MidiParseError) as exc:
        msg = str(exc)
        logger.warning("%s/%s [%s]: %s", piece.subset, piece.id, system, msg)
        return MetricRecord(**rec, error=msg, reasons={m: "record error" for m in METRICS})
    values, reasons = evaluate_pair(ref, est, config)
    return MetricRecord(**rec, values=values, reasons=reasons)


def _task(args):
    return evaluate_entry(*args)


def build_grid(manifest: Manifest, config: RunConfig = RunConfig(), jobs: int = 1) -> list[MetricRecord]:
    tasks = [(p, s, config) for p in manifest.pieces for s in manifest.systems]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(jobs) as pool:
            records = list(pool.map(_task, tasks, chunksize=4))
    else:
        records = [_task(t) for t in tasks]
    return sort_records(records)
