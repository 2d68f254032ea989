"""Command-line entry point: ``mds <subcommand> ...``.

Exit status is 0 on success, 1 for usage errors and 2 when input data
cannot be processed.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .corpus_stats import analyze, load_groups
from .curation import NotEnoughCandidates, curate_directory
from .harness import ConfigError, build_grid, load_config, load_manifest, read_grid, write_grid, write_report
from .midi import MidiParseError, save
from .note_extract import activations_to_notes, read_activations
from .random_gen import write_set

logger = logging.getLogger("mds")

EXIT_USAGE = 1
EXIT_DATA = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", metavar="FILE", help="key = value run configuration")
    p.add_argument("--jobs", type=int, default=1, metavar="N", help="worker processes (default 1)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mds", description="Benchmark tools for piano transcription evaluation.")
    parser.add_argument("--version", action="version", version=f"mds {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    common = [_common()]

    p = sub.add_parser("generate-random", parents=common, help="synthesize the Random set")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--seed", type=int, help="base seed (default: random_seed from config)")
    p.add_argument("--ppqn", type=int, default=480)

    p = sub.add_parser("curate", parents=common, help="filter and sample a genre-organised MIDI tree")
    p.add_argument("--in", dest="in_dir", required=True, metavar="DIR")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--genres", help="comma-separated genre folders (default: every subfolder)")
    p.add_argument("--n", type=int, help="pieces per genre (default: curation_n from config)")
    p.add_argument("--seed", type=int, help="sampling seed (default: curation_seed from config)")

    p = sub.add_parser("evaluate", parents=common, help="compute the metric grid for a run manifest")
    p.add_argument("--manifest", required=True, metavar="FILE")
    p.add_argument("--out", required=True, metavar="DIR")

    p = sub.add_parser("decode-activations", parents=common, help="turn an activation matrix into a MIDI file")
    p.add_argument("--in", dest="in_file", required=True, metavar="FILE")
    p.add_argument("--out", required=True, metavar="MID")

    p = sub.add_parser("analyze", parents=common, help="corpus statistics as JSON")
    p.add_argument("--in", dest="in_dir", required=True, metavar="DIR")
    p.add_argument("--group-by", choices=("genre", "none"), default="genre")
    p.add_argument("--out", required=True, metavar="FILE")

    p = sub.add_parser("report", parents=common, help="aggregate a grid into plot-ready tables")
    p.add_argument("--grid", required=True, metavar="FILE", help="grid.json or grid.csv")
    p.add_argument("--manifest", metavar="FILE", help="adds transcribed velocity histograms")
    p.add_argument("--out", required=True, metavar="DIR")
    return parser


def _cmd_generate(args, config) -> None:
    seed = config.random_seed if args.seed is None else args.seed
    m = write_set(args.out, seed, jobs=args.jobs, ppqn=args.ppqn)
    print(f"wrote {len(m['pieces'])} pieces ({m['total_notes']} notes, {m['total_hours']:.2f} h) to {args.out}")


def _cmd_curate(args, config) -> None:
    in_dir = Path(args.in_dir)
    if not in_dir.is_dir():
        raise FileNotFoundError(f"input directory {in_dir} does not exist")
    genres = args.genres.split(",") if args.genres else sorted(p.name for p in in_dir.iterdir() if p.is_dir())
    if not genres:
        raise ValueError(f"no genre folders under {in_dir}")
    m = curate_directory(in_dir, genres, args.out, n=config.curation_n if args.n is None else args.n,
                         seed=config.curation_seed if args.seed is None else args.seed, jobs=args.jobs,
                         filter_config=config.filter_config())
    for g, c in m["counts"].items():
        print(f"{g}: {c['before']} candidates, {c['after']} accepted, {len(m['selected'][g])} selected")


def _cmd_evaluate(args, config) -> None:
    manifest = load_manifest(args.manifest)
    records = build_grid(manifest, config, jobs=args.jobs)
    csv_path, json_path = write_grid(records, args.out, config.to_text())
    errors = sum(1 for r in records if r.error)
    print(f"{len(records)} records ({errors} with errors) -> {csv_path}, {json_path}")


def _cmd_decode(args, config) -> None:
    matrix = read_activations(args.in_file)
    perf = activations_to_notes(matrix, config.hmm_config(), source=args.in_file)
    save(perf, args.out)
    print(f"{len(perf)} notes -> {args.out}")


def _cmd_analyze(args, config) -> None:
    groups = load_groups(args.in_dir, args.group_by)
    if not groups:
        raise ValueError(f"no MIDI files under {args.in_dir}")
    report = analyze(groups)
    Path(args.out).write_text(json.dumps(report, indent=1) + "\n")
    print(f"{len(groups)} groups -> {args.out}")


def _cmd_report(args, config) -> None:
    records = read_grid(args.grid)
    manifest = load_manifest(args.manifest) if args.manifest else None
    doc = write_report(records, args.out, manifest, config.references)
    print(f"{len(doc['tables'])} tables -> {args.out}")


COMMANDS = {
    "generate-random": _cmd_generate,
    "curate": _cmd_curate,
    "evaluate": _cmd_evaluate,
    "decode-activations": _cmd_decode,
    "analyze": _cmd_analyze,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.jobs < 1:
        parser.error("--jobs must be at least 1")
    try:
        config = load_config(args.config)
        COMMANDS[args.command](args, config)
    except (ConfigError, NotEnoughCandidates, MidiParseError, ValueError, OSError) as exc:
        print(f"mds: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
