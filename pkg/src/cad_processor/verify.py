"""Re-aggregate an input snapshot and compare it cell by cell with a processed workbook.

The recomputation here deliberately avoids the processing path: the input is
read with a full (non-streaming) load, rows are grouped first and summed with
``math.fsum`` afterwards, anchors use :func:`statistics.median`, and the
membership weights are re-derived from clipped line segments. Only the row
classification rules and header aliases are shared, since those define what
the processor is supposed to do.
"""

from __future__ import annotations

import argparse
import enum
import hashlib
import math
import re
import statistics
import sys
import zipfile
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

import openpyxl
from openpyxl.utils import get_column_letter
from openpyxl.utils.cell import coordinate_from_string, column_index_from_string
from openpyxl.utils.exceptions import CellCoordinatesException, InvalidFileException

from . import emit
from .ingest import SCAN_COLS, SCAN_ROWS, LogicalField, RawRow, canonicalize_header
from .rules import CleanRow, DropReason, Dropped, classify_row

MONEY_TOL = 0.5 * 10 ** -emit.MONEY_DECIMALS
MU_TOL = 1e-6

SUMMARY_LABELS = (
    "Rows seen (including dropped rows)",
    "Rows dropped (summary rows: Total/Sum/Result)",
    "Rows dropped (missing School/Subject fields)",
    "Rows dropped (year not detected)",
    "Rows with missing cost values (treated as 0.0 for sums)",
    "Rows with missing student counts (treated as 0 for sums)",
    "Rows with negative student counts (dropped)",
    "Rows kept (aggregated)",
    "Groups with undefined cost-per-student (cost>0 and students=0)",
    "Groups with no activity (cost=0 and students=0)",
    "Subject-Year groups",
    "School-Year groups",
)

_ANCHOR_TEXT = re.compile(r"min (\S+), median (\S+), max (\S+)")
_ANCHOR_LINE = re.compile(r"(\d{4}): (.*)")


class Outcome(enum.Enum):
    PASS = "Pass"
    FAIL = "Fail"


@dataclass(frozen=True)
class VerificationFinding:
    check_id: str
    location: str
    expected: str
    actual: str
    outcome: Outcome


@dataclass
class VerificationReport:
    findings: list[VerificationFinding]

    @property
    def failures(self) -> list[VerificationFinding]:
        return [f for f in self.findings if f.outcome is Outcome.FAIL]

    @property
    def ok(self) -> bool:
        return not self.failures


# -- independent recomputation ------------------------------------------------


@dataclass
class Recomputed:
    input_sha256: str
    sheet_name: str
    header_row_0based: int
    counters: dict[str, int]
    subject_year: dict[tuple, tuple[float, int]]
    school_year: dict[tuple, tuple[float, int]]
    school_year_direct: dict[tuple, tuple[float, int]]
    anchors: dict[int, Optional[tuple[float, float, float]]]


def _hash(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _read_input(path: Path) -> tuple[str, int, list[RawRow]]:
    wb = openpyxl.load_workbook(path, data_only=True)
    try:
        for ws in wb.worksheets:
            grid = [list(r) for r in ws.iter_rows(values_only=True)]
            for r, values in enumerate(grid[:SCAN_ROWS]):
                found: dict[LogicalField, int] = {}
                for c, value in enumerate(values[:SCAN_COLS]):
                    field = canonicalize_header(value)
                    if field is not None:
                        found.setdefault(field, c)
                if len(found) < len(LogicalField):
                    continue
                rows = [
                    RawRow({f: (vals[c] if c < len(vals) else None) for f, c in found.items()}, i)
                    for i, vals in enumerate(grid[r + 1 :], start=r + 1)
                ]
                return ws.title, r, rows
    finally:
        wb.close()
    raise ValueError(f"no extract table found in {path}")


def _status_ratio(cost: float, students: int) -> tuple[str, Optional[float]]:
    if students > 0:
        return "ok", cost / students
    return ("none", 0.0) if cost == 0 else ("undefined", None)


def recompute(input_path: Path) -> Recomputed:
    sheet, header, raw_rows = _read_input(input_path)
    outcomes = [classify_row(raw) for raw in raw_rows]

    counters = dict.fromkeys(SUMMARY_LABELS, 0)
    counters[SUMMARY_LABELS[0]] = len(outcomes)
    drop_label = {
        DropReason.SUMMARY_ROW: SUMMARY_LABELS[1],
        DropReason.MISSING_KEYS: SUMMARY_LABELS[2],
        DropReason.MISSING_YEAR: SUMMARY_LABELS[3],
        DropReason.NEGATIVE_STUDENTS: SUMMARY_LABELS[6],
    }
    kept: list[CleanRow] = []
    for outcome in outcomes:
        if isinstance(outcome, Dropped):
            counters[drop_label[outcome.reason]] += 1
            counters[SUMMARY_LABELS[4]] += outcome.cost_missing
        else:
            kept.append(outcome)
            counters[SUMMARY_LABELS[4]] += outcome.cost_missing
            counters[SUMMARY_LABELS[5]] += outcome.students_missing
    counters[SUMMARY_LABELS[7]] = len(kept)

    # Group first, sum afterwards, walking rows in reverse.
    by_subject: dict[tuple, list[CleanRow]] = defaultdict(list)
    by_school: dict[tuple, list[CleanRow]] = defaultdict(list)
    for row in reversed(kept):
        by_subject[(row.school, row.subject_no, row.subject, row.year)].append(row)
        by_school[(row.school, row.year)].append(row)

    def total(rows: list[CleanRow]) -> tuple[float, int]:
        return math.fsum(r.cost for r in rows), sum(r.students for r in rows)

    subject_year = {k: total(v) for k, v in by_subject.items()}
    school_year_direct = {k: total(v) for k, v in by_school.items()}
    rolled: dict[tuple, list] = defaultdict(lambda: [[], 0])
    for (school, _, _, year), (cost, students) in subject_year.items():
        rolled[(school, year)][0].append(cost)
        rolled[(school, year)][1] += students
    school_year = {k: (math.fsum(costs), students) for k, (costs, students) in rolled.items()}

    statuses = [_status_ratio(*school_year[k])[0] for k in school_year]
    counters[SUMMARY_LABELS[8]] = statuses.count("undefined")
    counters[SUMMARY_LABELS[9]] = statuses.count("none")
    counters[SUMMARY_LABELS[10]] = len(subject_year)
    counters[SUMMARY_LABELS[11]] = len(school_year)

    eligible: dict[int, list[float]] = {year: [] for (_, year) in school_year}
    for key, totals in school_year.items():
        status, ratio = _status_ratio(*totals)
        if status == "ok" and ratio is not None and math.isfinite(ratio) and ratio > 0:
            eligible[key[1]].append(ratio)
    anchors = {
        year: (min(v), statistics.median(v), max(v)) if v else None
        for year, v in eligible.items()
    }
    return Recomputed(
        _hash(input_path), sheet, header, counters,
        subject_year, school_year, school_year_direct, anchors,
    )


def _clip01(value: float) -> float:
    return min(1.0, max(0.0, value))


def _weights(x: float, a: float, b: float, c: float) -> tuple[float, float, float]:
    low = (1.0 if x <= a else 0.0) if a == b else _clip01((b - x) / (b - a))
    high = (1.0 if x >= c else 0.0) if b == c else _clip01((x - b) / (c - b))
    if x == b:
        mid = 1.0
    else:
        rising = (x - a) / (b - a) if a < b else 0.0
        falling = (c - x) / (c - b) if b < c else 0.0
        mid = _clip01(rising if x < b else falling)
    return low, mid, high


def _label(weights: tuple[float, float, float]) -> str:
    low, mid, high = weights
    top = max(weights)
    for name, w in (("Medium", mid), ("Low", low), ("High", high)):
        if w == top:
            return name
    raise AssertionError("unreachable")


# -- comparison ---------------------------------------------------------------


def _show(value: Any) -> str:
    if value is None:
        return "(blank)"
    return repr(value) if isinstance(value, float) else str(value)


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _matches(expected: Any, actual: Any, kind: str) -> bool:
    if expected is None or actual is None:
        return expected is None and (actual is None or actual == "")
    if kind == "money":
        if not _is_number(actual):
            return False
        return abs(actual - expected) <= MONEY_TOL + 1e-9 * max(1.0, abs(expected))
    if kind == "mu":
        return _is_number(actual) and abs(actual - expected) <= MU_TOL + 1e-12
    if kind == "int":
        return _is_number(actual) and actual == expected
    return type(actual) is type(expected) and actual == expected


class _Checker:
    def __init__(self) -> None:
        self.findings: list[VerificationFinding] = []

    def add(self, check_id: str, location: str, expected: Any, actual: Any, ok: bool) -> None:
        self.findings.append(
            VerificationFinding(
                check_id, location, _show(expected), _show(actual),
                Outcome.PASS if ok else Outcome.FAIL,
            )
        )

    def cell(self, check_id: str, ws, row: int, col: int, expected: Any, kind: str = "text") -> None:
        actual = ws.cell(row=row, column=col).value
        location = f"{ws.title}!{get_column_letter(col)}{row}"
        self.add(check_id, location, expected, actual, _matches(expected, actual, kind))

    def grid(self, check_id: str, ws, expected: dict[tuple[int, int], tuple[Any, str]],
             max_row: int, max_col: int, elsewhere: frozenset = frozenset()) -> None:
        """Compare every expected cell plus any stray value inside the region.

        Coordinates in ``elsewhere`` are checked by the caller and skipped here.
        """
        cells = dict(expected)
        for r, values in enumerate(ws.iter_rows(min_row=1, max_row=max_row, max_col=max_col,
                                                values_only=True), start=1):
            for c, value in enumerate(values, start=1):
                if value not in (None, "") and (r, c) not in cells and (r, c) not in elsewhere:
                    cells[(r, c)] = (None, "text")
        for (r, c), (value, kind) in sorted(cells.items()):
            self.cell(check_id, ws, r, c, value, kind)


def _anchor_numbers(text: Any) -> Optional[tuple[float, float, float]]:
    match = _ANCHOR_TEXT.fullmatch(str(text)) if isinstance(text, str) else None
    if not match:
        return None
    try:
        return tuple(float(g) for g in match.groups())
    except ValueError:
        return None


def _check_anchor_text(chk: _Checker, check_id: str, location: str, year: int,
                       expected: Optional[tuple], actual_text: Any) -> None:
    if expected is None:
        chk.add(check_id, location, emit.NO_ANCHORS_TEXT, actual_text,
                actual_text == emit.NO_ANCHORS_TEXT)
        return
    parsed = _anchor_numbers(actual_text)
    ok = parsed is not None and all(_matches(e, a, "money") for e, a in zip(expected, parsed))
    chk.add(check_id, location, "min {}, median {}, max {}".format(*expected), actual_text, ok)


def _check_summary(chk: _Checker, ws, rec: Recomputed) -> None:
    chk.cell("summary.hash", ws, emit.HASH_ROW, 1, "Input file SHA-256")
    chk.cell("summary.hash", ws, emit.HASH_ROW, 2, rec.input_sha256)
    expected: dict[tuple[int, int], tuple[Any, str]] = {
        (1, 1): (emit.SUMMARY_SHEET, "text"),
        (4, 1): ("Input sheet", "text"),
        (4, 2): (rec.sheet_name, "text"),
        (5, 1): ("Header row (1-based)", "text"),
        (5, 2): (rec.header_row_0based + 1, "int"),
    }
    for offset, label in enumerate(SUMMARY_LABELS):
        row = emit.COUNTER_ROWS[0] + offset
        expected[(row, 1)] = (label, "text")
        expected[(row, 2)] = (rec.counters[label], "int")
    expected[(emit.ANCHOR_HEADING_ROW, 1)] = (emit.ANCHORS_HEADING, "text")
    years = sorted(rec.anchors)
    anchor_cells = set()
    for offset, year in enumerate(years):
        row = emit.ANCHOR_FIRST_ROW + offset
        expected[(row, 1)] = (year, "int")
        anchor_cells.add((row, 2))
        _check_anchor_text(chk, "summary.anchor", f"{ws.title}!B{row}", year,
                           rec.anchors[year], ws.cell(row=row, column=2).value)
    last = emit.ANCHOR_FIRST_ROW + len(years) - 1
    # Every other cell of the sheet must be blank.
    chk.grid("summary.cell", ws, expected, max(ws.max_row, last), max(ws.max_column, 2),
             frozenset(anchor_cells | {(emit.HASH_ROW, 1), (emit.HASH_ROW, 2)}))


def _ratio_expect(totals: tuple[float, int]) -> Any:
    status, ratio = _status_ratio(*totals)
    return None if status == "undefined" else ratio


def _check_trend(chk: _Checker, ws, rec: Recomputed) -> None:
    schools = sorted({school for school, _ in rec.school_year})
    years = sorted({year for _, year in rec.school_year})
    expected: dict[tuple[int, int], tuple[Any, str]] = {(1, 1): ("School", "text")}
    for j, year in enumerate(years, start=2):
        expected[(1, j)] = (year, "int")
    for i, school in enumerate(schools, start=2):
        expected[(i, 1)] = (school, "text")
        for j, year in enumerate(years, start=2):
            totals = rec.school_year.get((school, year))
            expected[(i, j)] = (None if totals is None else _ratio_expect(totals), "money")
    chk.grid("trend.cell", ws, expected, len(schools) + 1, len(years) + 1)

    # Colour scales: one per year column with anchors, declared at those anchors.
    declared: dict[str, tuple[str, list[float]]] = {}
    for cf in ws.conditional_formatting:
        for rule in cf.rules:
            if rule.colorScale is not None:
                values = [float(v.val) for v in rule.colorScale.cfvo]
                for rng in str(cf.sqref).split():
                    declared[rng.split(":")[0].rstrip("0123456789")] = (rng, values)
    for j, year in enumerate(years, start=2):
        letter = get_column_letter(j)
        location = f"{ws.title}!{letter}1"
        anchor = rec.anchors.get(year)
        got = declared.get(letter)
        if anchor is None or not schools:
            chk.add("trend.color_scale", location, None, got and got[1], got is None)
            continue
        want_range = f"{letter}2:{letter}{len(schools) + 1}"
        ok = (
            got is not None
            and got[0] == want_range
            and len(got[1]) == 3
            and all(_matches(e, a, "money") for e, a in zip(anchor, got[1]))
        )
        chk.add("trend.color_scale", location, (want_range, anchor), got, ok)

    # Below the table: one blank row, then the methodology block with the same
    # anchors as text; nothing else anywhere on the sheet.
    heading_row = len(schools) + 3
    lines = [emit.METHODOLOGY_HEADING, *emit.METHODOLOGY_NOTES]
    below: dict[tuple[int, int], tuple[Any, str]] = {}
    for offset, line in enumerate(lines):
        below[(heading_row + offset, 1)] = (line, "text")
    anchor_cells = set()
    for offset, year in enumerate(years):
        row = heading_row + len(lines) + offset
        anchor_cells.add((row, 1))
        value = ws.cell(row=row, column=1).value
        match = _ANCHOR_LINE.fullmatch(value) if isinstance(value, str) else None
        location = f"{ws.title}!A{row}"
        if match is None or int(match.group(1)) != year:
            chk.add("trend.methodology", location, f"{year}: ...", value, False)
        else:
            _check_anchor_text(chk, "trend.methodology", location, year,
                               rec.anchors.get(year), match.group(2))
    table_cells = {(r, c) for r in range(1, len(schools) + 2) for c in range(1, len(years) + 2)}
    last = heading_row + len(lines) + len(years) - 1
    chk.grid("trend.methodology", ws, below, max(ws.max_row, last),
             max(ws.max_column, len(years) + 1), frozenset(anchor_cells | table_cells))


def _check_report(chk: _Checker, ws, rec: Recomputed) -> None:
    years = sorted({key[3] for key in rec.subject_year})
    subjects = sorted({key[:3] for key in rec.subject_year})
    expected: dict[tuple[int, int], tuple[Any, str]] = {}
    for c, title in enumerate(emit.report_columns(years), start=1):
        expected[(1, c)] = (title, "text")
    for i, (school, subject_no, subject) in enumerate(subjects, start=2):
        expected[(i, 1)] = (school, "text")
        expected[(i, 2)] = (subject_no, "text")
        expected[(i, 3)] = (subject, "text")
        for j, year in enumerate(years):
            col = 4 + 3 * j
            totals = rec.subject_year.get((school, subject_no, subject, year))
            if totals is None:
                for k in range(3):
                    expected[(i, col + k)] = (None, "text")
                continue
            expected[(i, col)] = (totals[0], "money")
            expected[(i, col + 1)] = (totals[1], "int")
            expected[(i, col + 2)] = (_ratio_expect(totals), "money")
    chk.grid("report.cell", ws, expected, max(ws.max_row, len(subjects) + 1),
             max(ws.max_column, 3 + 3 * len(years)))


def _check_report_rollup(chk: _Checker, report, trend, rec: Recomputed) -> None:
    """Subject rows in Report must sum to the school-year values shown in Trend Analysis."""
    schools = sorted({school for school, _ in rec.school_year})
    years = sorted({year for _, year in rec.school_year})
    sums: dict[tuple[str, int], list] = defaultdict(lambda: [[], 0, 0])
    for values in report.iter_rows(min_row=2, values_only=True):
        if not values or values[0] in (None, ""):
            continue
        for j, year in enumerate(years):
            col = 3 + 3 * j
            cost, students = (values[col:col + 2] + (None, None))[:2]
            if cost is None and students is None:
                continue
            slot = sums[(str(values[0]), year)]
            slot[0].append(cost if _is_number(cost) else 0.0)
            slot[1] += students if _is_number(students) else 0
            slot[2] += 1
    for i, school in enumerate(schools, start=2):
        for j, year in enumerate(years, start=2):
            slot = sums.get((school, year))
            actual = trend.cell(row=i, column=j).value
            location = f"{trend.title}!{get_column_letter(j)}{i}"
            if slot is None:
                chk.add("trend.from_report", location, None, actual, actual in (None, ""))
                continue
            costs, students, n = slot
            expected = _ratio_expect((math.fsum(costs), students))
            if expected is None or actual is None:
                ok = expected is None and actual in (None, "")
            else:
                tol = MONEY_TOL * (1 + n / max(students, 1)) + 1e-9 * max(1.0, abs(expected))
                ok = _is_number(actual) and abs(actual - expected) <= tol
            chk.add("trend.from_report", location, expected, actual, ok)


def _check_bands(chk: _Checker, ws, rec: Recomputed) -> None:
    expected: dict[tuple[int, int], tuple[Any, str]] = {}
    for c, title in enumerate(emit.BANDS_HEADER, start=1):
        expected[(1, c)] = (title, "text")
    counts: dict[int, dict[str, int]] = {}
    row = 1
    for (school, year) in sorted(rec.school_year, key=lambda k: (k[1], k[0])):
        status, ratio = _status_ratio(*rec.school_year[(school, year)])
        anchor = rec.anchors.get(year)
        if anchor is None or status != "ok" or not (ratio > 0 and math.isfinite(ratio)):
            continue
        weights = _weights(ratio, *anchor)
        label = _label(weights)
        counts.setdefault(year, {"Low": 0, "Medium": 0, "High": 0})[label] += 1
        row += 1
        cells = [
            (school, "text"), (year, "int"), (ratio, "money"),
            (weights[0], "mu"), (weights[1], "mu"), (weights[2], "mu"),
            (label, "text"), ({"Low": 0.0, "Medium": 0.5, "High": 1.0}[label], "money"),
            (anchor[0], "money"), (anchor[1], "money"), (anchor[2], "money"),
        ]
        for c, cell in enumerate(cells, start=1):
            expected[(row, c)] = cell
    row += 2
    expected[(row, 1)] = (emit.BAND_COUNTS_HEADING, "text")
    row += 1
    for c, title in enumerate(emit.BAND_COUNTS_HEADER, start=1):
        expected[(row, c)] = (title, "text")
    for year in sorted(counts):
        row += 1
        tally = counts[year]
        values = [year, tally["Low"], tally["Medium"], tally["High"], sum(tally.values())]
        for c, value in enumerate(values, start=1):
            expected[(row, c)] = (value, "int")
    chk.grid("bands.cell", ws, expected, max(ws.max_row, row), max(ws.max_column, 11))


def _check_recomputation(chk: _Checker, rec: Recomputed) -> None:
    """School-year totals folded directly must equal the roll-up of subject-year totals."""
    for key in sorted(rec.school_year_direct):
        direct = rec.school_year_direct[key]
        rolled = rec.school_year.get(key)
        ok = (
            rolled is not None
            and rolled[1] == direct[1]
            and math.isclose(rolled[0], direct[0], rel_tol=1e-12, abs_tol=1e-9)
        )
        chk.add("recompute.school_year_rollup", f"(recomputation) {key[0]}|{key[1]}",
                direct, rolled, ok)


def verify(input_path: str | Path, processed_path: str | Path) -> VerificationReport:
    """Check ``processed_path`` against a fresh recomputation from ``input_path``.

    Unreadable files raise ``OSError``; every other problem becomes a failing finding.
    """
    input_path, processed_path = Path(input_path), Path(processed_path)
    rec = recompute(input_path)
    try:
        wb = openpyxl.load_workbook(processed_path)
    except (zipfile.BadZipFile, InvalidFileException, KeyError) as exc:
        raise OSError(f"cannot read processed workbook {processed_path}: {exc}") from exc

    try:
        return check_workbook(rec, wb)
    finally:
        wb.close()


def check_workbook(rec: Recomputed, wb: openpyxl.Workbook) -> VerificationReport:
    """Compare an already loaded processed workbook with a recomputation."""
    chk = _Checker()
    names = wb.sheetnames
    full = [emit.SUMMARY_SHEET, emit.TREND_SHEET, emit.REPORT_SHEET, emit.BANDS_SHEET]
    allowed = (full, full[1:])
    chk.add("sheet.order", "", full, names, names in allowed)
    for name in full[1:]:
        if name not in names:
            chk.add("sheet.missing", f"{name}!A1", "present", "missing", False)

    _check_recomputation(chk, rec)
    if emit.SUMMARY_SHEET in names:
        _check_summary(chk, wb[emit.SUMMARY_SHEET], rec)
    if emit.TREND_SHEET in names:
        _check_trend(chk, wb[emit.TREND_SHEET], rec)
    if emit.REPORT_SHEET in names:
        _check_report(chk, wb[emit.REPORT_SHEET], rec)
        if emit.TREND_SHEET in names:
            _check_report_rollup(chk, wb[emit.REPORT_SHEET], wb[emit.TREND_SHEET], rec)
    if emit.BANDS_SHEET in names:
        _check_bands(chk, wb[emit.BANDS_SHEET], rec)
    return VerificationReport(chk.findings)


def _sort_key(finding: VerificationFinding) -> tuple:
    sheet, _, cell = finding.location.rpartition("!")
    try:
        letters, row = coordinate_from_string(cell)
        position = (row, column_index_from_string(letters))
    except (CellCoordinatesException, ValueError):
        sheet, position = finding.location, (0, 0)
    return (sheet, position, finding.check_id)


def report_findings(findings: Iterable[VerificationFinding], format: str = "text") -> str:
    """Render findings; failures first (text) or all findings (tsv), then a count line."""
    ordered = sorted(findings, key=_sort_key)
    failures = [f for f in ordered if f.outcome is Outcome.FAIL]
    lines = []
    if format == "tsv":
        for f in ordered:
            lines.append("\t".join((f.outcome.value, f.location, f.check_id, f.expected, f.actual)))
    elif format == "text":
        for f in failures:
            lines.append(f"FAIL {f.location} [{f.check_id}] expected {f.expected}, got {f.actual}")
    else:
        raise ValueError(f"unknown format {format!r}")
    lines.append(f"{len(ordered)} checks, {len(failures)} failures")
    return "\n".join(lines) + "\n"


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="cad-processor verify",
        description="Re-aggregate an input workbook and compare it with a processed workbook.",
    )
    parser.add_argument("--input", required=True, type=Path, help="input extract workbook")
    parser.add_argument("--processed", required=True, type=Path, help="processed workbook")
    parser.add_argument("--format", choices=("text", "tsv"), default="text")
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        report = verify(ns.input, ns.processed)
    except (OSError, ValueError) as exc:
        print(f"cad-processor verify: error: {exc}", file=sys.stderr)
        return 1
    sys.stdout.write(report_findings(report.findings, ns.format))
    return 0 if report.ok else 1
