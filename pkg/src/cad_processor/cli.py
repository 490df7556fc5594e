"""Command-line entry point.

    cad-processor [--base-dir DIR] [--input-filename NAME] [--output-filename NAME]
                  [--verbose] [--no-processing-summary]
    cad-processor verify --input PATH --processed PATH [--format text|tsv]

Exit status: 0 success, 1 runtime error (or verification failures), 2 usage error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from . import emit, provenance
from .aggregate import fold, school_year_ratios
from .banding import band_counts, band_year, compute_anchors
from .ingest import locate_table, open_workbook, stream_rows
from .rules import classify_row

DEFAULT_INPUT_NAME = "CAD_Contract.xlsx"
DEFAULT_OUTPUT_NAME = emit.DEFAULT_OUTPUT_NAME

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2


@dataclass(frozen=True)
class Config:
    base_dir: Optional[Path] = None
    input_filename: str = DEFAULT_INPUT_NAME
    output_filename: str = DEFAULT_OUTPUT_NAME
    verbose: bool = False
    include_processing_summary: bool = True


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cad-processor",
        description="Process a casual-academic cost extract into a banded multi-sheet report.",
        epilog="Run 'cad-processor verify --help' to check a processed workbook against its input.",
    )
    parser.add_argument(
        "--base-dir",
        type=Path,
        default=None,
        help="directory holding inputs/ and outputs/ (default: current directory)",
    )
    parser.add_argument("--input-filename", default=DEFAULT_INPUT_NAME, help="name under inputs/")
    parser.add_argument("--output-filename", default=DEFAULT_OUTPUT_NAME, help="name under outputs/")
    parser.add_argument("--verbose", action="store_true", help="echo trace messages to stderr")
    parser.add_argument(
        "--no-processing-summary",
        dest="include_processing_summary",
        action="store_false",
        help="omit the Processing Summary sheet",
    )
    return parser


def parse_args(argv: Optional[Sequence[str]] = None) -> Config:
    ns = build_parser().parse_args(argv)
    return Config(
        base_dir=ns.base_dir,
        input_filename=ns.input_filename,
        output_filename=ns.output_filename,
        verbose=ns.verbose,
        include_processing_summary=ns.include_processing_summary,
    )


def resolve_paths(config: Config) -> tuple[Path, Path, Path]:
    """Return ``(input_path, output_path, log_dir)``; creates ``outputs/`` if needed."""
    base = Path(config.base_dir) if config.base_dir is not None else Path.cwd()
    input_path = base / "inputs" / config.input_filename
    output_path = base / "outputs" / config.output_filename
    output_path.parent.mkdir(parents=True, exist_ok=True)
    return input_path, output_path, base


def run(config: Config) -> int:
    base = Path(config.base_dir) if config.base_dir is not None else Path.cwd()
    base.mkdir(parents=True, exist_ok=True)
    exec_log = base / provenance.EXECUTION_LOG_NAME
    trace_log = base / provenance.TRACE_LOG_NAME

    def say(message: str) -> None:
        provenance.trace(message, trace_log)
        if config.verbose:
            print(message, file=sys.stderr)

    input_hash = provenance.UNAVAILABLE
    try:
        input_path, output_path, _ = resolve_paths(config)
        say(f"Input path: {input_path}")
        if not input_path.is_file():
            raise FileNotFoundError(f"input workbook not found: {input_path}")

        say("stage=hash")
        input_hash = provenance.sha256_file(input_path)
        say(f"Input file SHA-256: {input_hash}")

        with open_workbook(input_path) as wb:
            say("stage=locate")
            located = locate_table(wb)
            say(
                f"Detected input table: sheet={located.sheet_name!r} "
                f"header_row={located.header_row_0based} (0-based)"
            )
            say("stage=stream+classify+fold")
            folded = fold(classify_row(raw) for raw in stream_rows(wb, located))
        say(f"Rows seen: {folded.counters.total_rows_seen}")

        say("stage=ratios")
        ratios = school_year_ratios(folded.school_year)
        say("stage=anchors")
        anchors = compute_anchors(ratios)
        say("stage=band")
        records = band_year(ratios, anchors)

        say("stage=emit")
        info = emit.SummaryInfo(input_hash, located.sheet_name, located.header_row_0based)
        plan = emit.build_plan(
            [
                emit.write_processing_summary(info, folded.counters, anchors),
                emit.write_trend_analysis(ratios, anchors),
                emit.write_report(folded.subject_year),
                emit.write_fuzzy_bands(records, band_counts(records)),
            ],
            include_processing_summary=config.include_processing_summary,
        )
        emit.save_workbook(plan, output_path)
        say(f"Output written: {output_path}")
    except Exception as exc:
        say(f"ERROR: {type(exc).__name__}: {exc}")
        provenance.append_execution_log(
            provenance.RunRecord(
                provenance.STATUS_ERROR,
                config.input_filename,
                config.output_filename,
                input_hash,
            ),
            exec_log,
        )
        print(f"cad-processor: error: {exc}", file=sys.stderr)
        return EXIT_ERROR

    provenance.append_execution_log(
        provenance.RunRecord(
            provenance.STATUS_OK,
            config.input_filename,
            config.output_filename,
            input_hash,
            located.sheet_name,
            located.header_row_0based,
        ),
        exec_log,
    )
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv[:1] == ["verify"]:
        from .verify import main as verify_main

        return verify_main(argv[1:])
    try:
        config = parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
