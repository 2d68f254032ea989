from pathlib import Path

from .notes import N_KEYS, PITCH_MAX, PITCH_MIN, Note, Performance, merge_collisions
from .roll import PianoRoll, polyphony_series, rasterize
from .smf import DEFAULT_PPQN, MidiParseError, parse_smf, read_smf, write_smf

__all__ = [
    "DEFAULT_PPQN",
    "MidiParseError",
    "N_KEYS",
    "Note",
    "PITCH_MAX",
    "PITCH_MIN",
    "Performance",
    "PianoRoll",
    "merge_collisions",
    "parse_smf",
    "polyphony_series",
    "rasterize",
    "read_smf",
    "list_midi_files",
    "load",
    "save",
    "write_smf",
]


def load(path) -> Performance:
    """Parse the MIDI file at ``path``."""
    with open(path, "rb") as fh:
        return parse_smf(fh.read(), source=str(path))


def save(performance: Performance, path, ppqn: int = DEFAULT_PPQN) -> None:
    with open(path, "wb") as fh:
        fh.write(write_smf(performance, ppqn))


MIDI_SUFFIXES = (".mid", ".midi")


def list_midi_files(folder) -> list[Path]:
    """All MIDI files below ``folder``, sorted by path."""
    return sorted(p for p in Path(folder).rglob("*") if p.suffix.lower() in MIDI_SUFFIXES and p.is_file())
