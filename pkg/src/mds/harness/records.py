"""Result records and their CSV / JSON serialisation."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional

from ..ir_metrics import NOTE_VARIANTS
from ..mi_metrics import MI_METRICS

SCHEMA_VERSION = 1
SUBSETS = ("Genre", "Random", "MAEtest-Disklavier", "MAEtest-MAESTRO")

METRICS: tuple[str, ...] = (
    ("frame_precision", "frame_recall", "frame_f1")
    + tuple(f"note_{v.value}_{k}" for v in NOTE_VARIANTS for k in ("precision", "recall", "f1"))
    + MI_METRICS
)
KEY_COLUMNS = ("piece", "system", "subset", "genre", "polyphony", "dynamics", "error")


@dataclass
class MetricRecord:
    piece: str
    system: str
    subset: str
    genre: Optional[str] = None
    polyphony: Optional[int] = None
    dynamics: Optional[int] = None
    error: Optional[str] = None
    values: dict[str, Optional[float]] = field(default_factory=dict)
    reasons: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        self.values = {m: self.values.get(m) for m in METRICS}
        for m, v in self.values.items():
            if v is not None and not math.isfinite(v):
                raise ValueError(f"{m} is not finite")
        self.reasons = {m: self.reasons[m] for m in METRICS if m in self.reasons}

    @property
    def sort_key(self):
        return (self.subset, self.piece, self.system)

    def to_dict(self) -> dict:
        return {
            "piece": self.piece, "system": self.system, "subset": self.subset, "genre": self.genre,
            "polyphony": self.polyphony, "dynamics": self.dynamics, "error": self.error,
            "values": dict(self.values), "reasons": dict(self.reasons),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricRecord":
        return cls(**{k: d.get(k) for k in KEY_COLUMNS}, values=d.get("values", {}), reasons=d.get("reasons", {}))


def sort_records(records: Iterable[MetricRecord]) -> list[MetricRecord]:
    return sorted(records, key=lambda r: r.sort_key)


# --- CSV -------------------------------------------------------------------

def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def grid_to_csv(records: Iterable[MetricRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(KEY_COLUMNS + METRICS + ("reasons",))
    for r in records:
        w.writerow([_cell(getattr(r, k)) for k in KEY_COLUMNS]
                   + [_cell(r.values[m]) for m in METRICS]
                   + [json.dumps(r.reasons, sort_keys=True) if r.reasons else ""])
    return buf.getvalue()


def _opt_int(s: str) -> Optional[int]:
    return int(s) if s != "" else None


def grid_from_csv(text: str) -> list[MetricRecord]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise ValueError("empty CSV")
    header = tuple(rows[0])
    if header != KEY_COLUMNS + METRICS + ("reasons",):
        raise ValueError("CSV header does not match the grid layout")
    out = []
    for row in rows[1:]:
        d = dict(zip(header, row))
        out.append(MetricRecord(
            piece=d["piece"], system=d["system"], subset=d["subset"], genre=d["genre"] or None,
            polyphony=_opt_int(d["polyphony"]), dynamics=_opt_int(d["dynamics"]), error=d["error"] or None,
            values={m: (float(d[m]) if d[m] != "" else None) for m in METRICS},
            reasons=json.loads(d["reasons"]) if d["reasons"] else {},
        ))
    return out


# --- JSON ------------------------------------------------------------------

def grid_to_json(records: Iterable[MetricRecord], config_text: Optional[str] = None) -> str:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "metrics": list(METRICS),
        "records": [r.to_dict() for r in records],
    }
    if config_text is not None:
        doc["config"] = config_text
    return json.dumps(doc, indent=1) + "\n"


def grid_schema() -> dict:
    return json.loads(resources.files("mds").joinpath("schemas/grid.schema.json").read_text())


def validate_grid_document(doc: dict) -> None:
    import jsonschema

    jsonschema.validate(doc, grid_schema())


def grid_from_json(text: str) -> list[MetricRecord]:
    doc = json.loads(text)
    validate_grid_document(doc)
    if doc["metrics"] != list(METRICS):
        raise ValueError("grid metric list does not match this version")
    return [MetricRecord.from_dict(d) for d in doc["records"]]


def read_grid(path) -> list[MetricRecord]:
    p = Path(path)
    text = p.read_text()
    return grid_from_csv(text) if p.suffix.lower() == ".csv" else grid_from_json(text)


def write_grid(records: list[MetricRecord], out_dir, config_text: Optional[str] = None) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path, json_path = out / "grid.csv", out / "grid.json"
    csv_path.write_text(grid_to_csv(records))
    json_path.write_text(grid_to_json(records, config_text))
    return csv_path, json_path
