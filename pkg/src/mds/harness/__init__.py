"""Evaluation runs: configuration, result grid, aggregation and reports."""

from .aggregate import AggregateStats, ShiftDelta, aggregate, shift_delta, write_report
from .config import ConfigError, RunConfig, load_config, parse_config
from .evaluate import Manifest, PieceEntry, build_grid, evaluate_entry, evaluate_pair, load_manifest, parse_manifest
from .records import (
    METRICS,
    MetricRecord,
    grid_from_csv,
    grid_from_json,
    grid_to_csv,
    grid_to_json,
    read_grid,
    write_grid,
)

__all__ = [
    "AggregateStats", "ConfigError", "METRICS", "Manifest", "MetricRecord", "PieceEntry", "RunConfig",
    "ShiftDelta", "aggregate", "build_grid", "evaluate_entry", "evaluate_pair", "grid_from_csv",
    "grid_from_json", "grid_to_csv", "grid_to_json", "load_config", "load_manifest", "parse_config",
    "parse_manifest", "read_grid", "shift_delta", "write_grid", "write_report",
]
