"""Run configuration: a flat ``key = value`` text file.

Blank lines and everything after ``#`` are ignored. Keys must be fields of
:class:`RunConfig`; values are parsed according to the field type. Keys of
the form ``reference.<metric>`` store external reference constants that
reports draw next to the measured values.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

from ..curation import FilterConfig
from ..ir_metrics import MatchConfig
from ..mi_metrics import MiConfig
from ..note_extract import NoteHmmConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    fps: int = 100
    onset_tolerance: float = 0.05
    offset_min_tolerance: float = 0.05
    offset_ratio: float = 0.2
    velocity_tolerance: float = 0.1
    window: float = 2.0
    hop: float = 1.0
    spiral_radius: float = 1.0
    spiral_rise: float = MiConfig().rise
    min_matches: int = 4
    min_windows: int = 4
    hmm_p_off_to_on: float = 0.30
    hmm_p_on_to_off: float = 0.05
    hmm_frame_duration: float = 0.032
    hmm_velocity: int = 64
    random_seed: int = 0
    curation_n: int = 10
    curation_seed: int = 0
    min_duration: float = 120.0
    max_duration: float = 240.0
    max_gap_total: float = 5.0
    min_avg_polyphony: float = 3.0
    min_unique_velocities: int = 20
    min_unique_pitches: int = 15
    references: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.fps <= 0:
            raise ConfigError("fps must be positive")
        try:
            self.match_config()
            self.mi_config()
            self.hmm_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def match_config(self) -> MatchConfig:
        return MatchConfig(self.onset_tolerance, self.offset_min_tolerance, self.offset_ratio,
                           self.velocity_tolerance)

    def mi_config(self) -> MiConfig:
        return MiConfig(self.window, self.hop, self.spiral_radius, self.spiral_rise, self.min_matches,
                        self.min_windows, self.onset_tolerance)

    def hmm_config(self) -> NoteHmmConfig:
        return NoteHmmConfig(self.hmm_p_off_to_on, self.hmm_p_on_to_off, self.hmm_frame_duration,
                             velocity=self.hmm_velocity)

    def filter_config(self) -> FilterConfig:
        return FilterConfig(self.min_duration, self.max_duration, self.max_gap_total, self.min_avg_polyphony,
                            self.min_unique_velocities, self.min_unique_pitches)

    def to_text(self) -> str:
        lines = [f"{f.name} = {getattr(self, f.name)!r}" for f in fields(self) if f.name != "references"]
        lines += [f"reference.{k} = {v!r}" for k, v in sorted(self.references.items())]
        return "\n".join(lines) + "\n"


_TYPES = {f.name: f.type for f in fields(RunConfig) if f.name != "references"}


def _convert(key: str, raw: str, type_name: str):
    try:
        if type_name == "int":
            return int(raw)
        if type_name == "float":
            return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected {type_name}, got {raw!r}") from None
    return raw


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    values: dict = {}
    references: dict = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        key, raw = key.strip(), raw.strip()
        where = f"{source}:{lineno}"
        if not sep or not key:
            raise ConfigError(f"{where}: expected 'key = value'")
        if key.startswith("reference."):
            references[key[len("reference."):]] = _convert(where, raw, "float")
        elif key in _TYPES:
            if key in values:
                raise ConfigError(f"{where}: duplicate key {key!r}")
            values[key] = _convert(f"{where}: {key}", raw, _TYPES[key])
        else:
            raise ConfigError(f"{where}: unknown key {key!r}")
    return RunConfig(**values, references=references)


def load_config(path) -> RunConfig:
    if path is None:
        return RunConfig()
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc.strerror}") from exc
    return parse_config(text, str(p))
