"""Group statistics, distribution-shift deltas and long-format report tables."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from ..midi import MidiParseError, load
from .records import METRICS, MetricRecord

GROUP_KEYS = ("system", "subset", "genre", "polyphony", "dynamics")

# (name, before subset, after subset)
DEFAULT_SHIFTS = (
    ("sound", "MAEtest-MAESTRO", "MAEtest-Disklavier"),
    ("genre", "MAEtest-Disklavier", "Genre"),
    ("random", "MAEtest-Disklavier", "Random"),
)


@dataclass(frozen=True)
class AggregateStats:
    mean: Optional[float]
    median: Optional[float]
    q1: Optional[float]
    q3: Optional[float]
    count: int
    missing: int

    @classmethod
    def of(cls, values: Sequence[Optional[float]]) -> "AggregateStats":
        """Missing values are counted, never averaged. Quartiles interpolate linearly between order statistics."""
        present = np.array([v for v in values if v is not None], dtype=float)
        missing = len(values) - len(present)
        if not len(present):
            return cls(None, None, None, None, 0, missing)
        q1, med, q3 = np.percentile(present, [25, 50, 75], method="linear")
        return cls(math.fsum(present) / len(present), float(med), float(q1), float(q3), len(present), missing)


def _check_keys(keys: Sequence[str]) -> None:
    bad = [k for k in keys if k not in GROUP_KEYS]
    if bad:
        raise ValueError(f"cannot group by {bad}; choose from {GROUP_KEYS}")


def aggregate(records: Iterable[MetricRecord], group_by: Sequence[str], metric: str) -> dict[tuple, AggregateStats]:
    """Statistics of ``metric`` per group; groups are keyed by tuples in ``group_by`` order and sorted."""
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}")
    _check_keys(group_by)
    groups: dict[tuple, list] = {}
    for r in records:
        if r.error:
            continue
        groups.setdefault(tuple(getattr(r, k) for k in group_by), []).append(r.values[metric])
    order = sorted(groups, key=lambda key: tuple((v is None, str(v) if not isinstance(v, int) else f"{v:09d}")
                                                  for v in key))
    return {k: AggregateStats.of(groups[k]) for k in order}


@dataclass(frozen=True)
class ShiftDelta:
    metric: str
    before: str
    after: str
    delta: float
    mean_before: float
    mean_after: float
    system: Optional[str] = None


def shift_delta(records: Iterable[MetricRecord], metric: str, before: str, after: str,
                system: Optional[str] = None, scale: float = 100.0) -> ShiftDelta:
    """Drop in the subset mean of ``metric`` from ``before`` to ``after``, in percentage points.

    Positive means the system got worse under the shift. Pass ``system`` to
    restrict to one system; otherwise records of every system are pooled.
    """
    records = [r for r in records if not r.error and (system is None or r.system == system)]
    means = {}
    for subset in (before, after):
        vals = [r.values[metric] for r in records if r.subset == subset and r.values[metric] is not None]
        if not vals:
            raise ValueError(f"no {metric} values in subset {subset!r}")
        means[subset] = math.fsum(vals) / len(vals)  # exact sum: order of records never matters
    return ShiftDelta(metric, before, after, scale * (means[before] - means[after]), means[before], means[after],
                      system)


# --- long-format tables ----------------------------------------------------

def long_table(records: Sequence[MetricRecord], group_by: Sequence[str],
               metrics: Sequence[str] = METRICS) -> list[dict]:
    rows = []
    for m in metrics:
        for key, st in aggregate(records, group_by, m).items():
            rows.append({**dict(zip(group_by, key)), "metric": m, **asdict(st)})
    return rows


def shift_table(records: Sequence[MetricRecord], metrics: Sequence[str] = METRICS,
                shifts=DEFAULT_SHIFTS) -> list[dict]:
    rows = []
    subsets = {r.subset for r in records if not r.error}
    for name, before, after in shifts:
        if before not in subsets or after not in subsets:
            continue
        for m in metrics:
            try:
                d = shift_delta(records, m, before, after)
            except ValueError:
                continue
            rows.append({"shift": name, **asdict(d)})
    return rows


def velocity_histograms(manifest, bins: Sequence[int] = tuple(range(1, 129))) -> list[dict]:
    """Transcribed velocity counts per system and dynamics level for the Random subset."""
    counts: dict[tuple, np.ndarray] = {}
    for piece in manifest.pieces:
        if piece.subset != "Random" or piece.dynamics is None:
            continue
        for system, path in piece.estimates.items():
            try:
                v = load(path).arrays()[3]
            except (OSError, MidiParseError):
                continue
            h, _ = np.histogram(v, bins=np.asarray(bins))
            key = (system, piece.dynamics)
            counts[key] = counts.get(key, 0) + h
    rows = []
    for (system, dyn), h in sorted(counts.items()):
        for lo, hi, c in zip(bins, bins[1:], h):
            rows.append({"system": system, "dynamics": dyn, "bin_lo": int(lo), "bin_hi": int(hi), "count": int(c)})
    return rows


TABLES = {
    "genre_by_system": ("system", "genre"),
    "polyphony_by_system": ("system", "polyphony"),
    "dynamics_by_system": ("system", "dynamics"),
    "subset_by_system": ("system", "subset"),
    "system": ("system",),
}


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    if rows:
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if v is None else repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def write_report(records: Sequence[MetricRecord], out_dir, manifest=None, references: Optional[dict] = None) -> dict:
    """Write every table as CSV plus one ``report.json`` holding them all."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tables: dict[str, list[dict]] = {}
    for name, keys in TABLES.items():
        subset_filter = {"polyphony_by_system": "Random", "dynamics_by_system": "Random",
                         "genre_by_system": "Genre"}.get(name)
        recs = [r for r in records if subset_filter is None or r.subset == subset_filter]
        tables[name] = long_table(recs, keys)
    tables["shift_deltas"] = shift_table(records)
    if manifest is not None:
        tables["velocity_histograms"] = velocity_histograms(manifest)
    for name, rows in tables.items():
        (out / f"{name}.csv").write_text(rows_to_csv(rows))
    doc = {"tables": tables, "references": dict(references or {}),
           "coverage": {m: {"present": sum(r.values[m] is not None for r in records if not r.error),
                            "missing": sum(r.values[m] is None for r in records if not r.error)} for m in METRICS},
           "errors": sum(1 for r in records if r.error)}
    (out / "report.json").write_text(json.dumps(doc, indent=1) + "\n")
    return doc
