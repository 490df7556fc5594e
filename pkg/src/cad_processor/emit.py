"""Build and write the processed workbook.

Each ``write_*`` function returns a :class:`SheetPayload` (plain rows of cell
values plus formatting requests); :func:`save_workbook` renders the payloads
with openpyxl and repacks the archive so identical plans give identical bytes.
"""

from __future__ import annotations

import io
import os
import tempfile
import zipfile
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence

from openpyxl import Workbook
from openpyxl.formatting.rule import ColorScaleRule
from openpyxl.styles import Font
from openpyxl.utils import get_column_letter
from openpyxl.writer.excel import ExcelWriter

from .aggregate import (
    GroupTotals,
    QualityCounters,
    RatioStatus,
    SchoolYearKey,
    SubjectYearKey,
    compute_ratio,
)
from .banding import BandedRecord, BandLabel, YearAnchors

DEFAULT_OUTPUT_NAME = "Processed_CAD_Contract.xlsx"

SUMMARY_SHEET = "Processing Summary"
TREND_SHEET = "Trend Analysis"
REPORT_SHEET = "Report"
BANDS_SHEET = "Fuzzy Bands"

CREATOR = "cad-processor"
FIXED_TIMESTAMP = datetime(2000, 1, 1, 0, 0, 0)
ZIP_TIMESTAMP = (1980, 1, 1, 0, 0, 0)
ZIP_LEVEL = 6

MONEY_DECIMALS = 2
MU_DECIMALS = 6

NO_ANCHORS_TEXT = "No finite, positive values"
ANCHORS_HEADING = "Anchors used (finite positive School-Year values)"
METHODOLOGY_HEADING = "Methodology & Insights"
BAND_COUNTS_HEADING = "Band counts by year"

# Processing Summary layout (1-based rows).
HASH_ROW = 3
COUNTER_ROWS = (6, 15)
GROUP_ROWS = (16, 17)
ANCHOR_HEADING_ROW = 20
ANCHOR_FIRST_ROW = 21

# Excel's stock three-colour scale.
SCALE_LOW_COLOR = "63BE7B"
SCALE_MID_COLOR = "FFEB84"
SCALE_HIGH_COLOR = "F8696B"

BANDS_HEADER = (
    "School",
    "Year",
    "Cost per Student",
    "Mu_Low",
    "Mu_Medium",
    "Mu_High",
    "Band",
    "Band_Score_0_to_1",
    "Anchor_Min",
    "Anchor_Median",
    "Anchor_Max",
)
BAND_COUNTS_HEADER = ("Year", "Low", "Medium", "High", "Total")


@dataclass(frozen=True)
class ColorScale:
    cell_range: str
    low: float
    mid: float
    high: float


@dataclass
class SheetPayload:
    name: str
    rows: list[list[Any]]
    bold_rows: tuple[int, ...] = ()
    color_scales: list[ColorScale] = field(default_factory=list)
    column_widths: dict[int, float] = field(default_factory=dict)


@dataclass
class WorkbookPlan:
    include_processing_summary: bool
    sheets: list[SheetPayload]
    creator: str = CREATOR
    created_at: datetime = FIXED_TIMESTAMP
    modified_at: datetime = FIXED_TIMESTAMP


@dataclass(frozen=True)
class SummaryInfo:
    """Run metadata shown at the top of Processing Summary."""

    input_sha256_hex: str
    sheet_name: str
    header_row_0based: int


def money(value: float) -> float:
    return round(value, MONEY_DECIMALS)


def ratio_cell(status: RatioStatus, ratio: Optional[float]) -> Optional[float]:
    """Undefined renders as an empty cell; No activity as 0.0."""
    if status is RatioStatus.UNDEFINED or ratio is None:
        return None
    return money(ratio)


def format_anchor_value(value: float) -> str:
    return repr(money(value))


def format_anchors(anchors: Optional[YearAnchors]) -> str:
    if anchors is None:
        return NO_ANCHORS_TEXT
    return (
        f"min {format_anchor_value(anchors.a_min)}, "
        f"median {format_anchor_value(anchors.b_median)}, "
        f"max {format_anchor_value(anchors.c_max)}"
    )


def counter_rows(counters: QualityCounters) -> list[tuple[str, int]]:
    """Label/value pairs for Processing Summary rows 6-17, in row order."""
    return [
        ("Rows seen (including dropped rows)", counters.total_rows_seen),
        ("Rows dropped (summary rows: Total/Sum/Result)", counters.rows_dropped_summary_rows),
        ("Rows dropped (missing School/Subject fields)", counters.rows_dropped_missing_keys),
        ("Rows dropped (year not detected)", counters.rows_dropped_missing_year),
        ("Rows with missing cost values (treated as 0.0 for sums)", counters.rows_with_missing_cost),
        ("Rows with missing student counts (treated as 0 for sums)", counters.rows_with_missing_students),
        ("Rows with negative student counts (dropped)", counters.rows_with_negative_students),
        ("Rows kept (aggregated)", counters.rows_kept),
        ("Groups with undefined cost-per-student (cost>0 and students=0)", counters.groups_undefined),
        ("Groups with no activity (cost=0 and students=0)", counters.groups_no_activity),
        ("Subject-Year groups", counters.subject_year_groups),
        ("School-Year groups", counters.school_year_groups),
    ]


def write_processing_summary(
    info: SummaryInfo,
    counters: QualityCounters,
    anchors: Mapping[int, Optional[YearAnchors]],
) -> SheetPayload:
    rows: list[list[Any]] = [
        ["Processing Summary", None],
        [None, None],
        ["Input file SHA-256", info.input_sha256_hex],
        ["Input sheet", info.sheet_name],
        ["Header row (1-based)", info.header_row_0based + 1],
    ]
    rows.extend([label, value] for label, value in counter_rows(counters))
    rows.extend([[None, None], [None, None], [ANCHORS_HEADING, None]])
    assert len(rows) == ANCHOR_HEADING_ROW
    for year in sorted(anchors):
        rows.append([year, format_anchors(anchors[year])])
    return SheetPayload(
        SUMMARY_SHEET,
        rows,
        bold_rows=(1, ANCHOR_HEADING_ROW),
        column_widths={1: 62, 2: 70},
    )


METHODOLOGY_NOTES = (
    "Each cell is the school-year Incl Oncosts total divided by the Student Count total.",
    "0.0 marks no activity (cost = 0 and students = 0).",
    "A blank cell means no rows for that school-year, or cost > 0 with 0 students (undefined).",
    "Each year column has its own colour scale: green at the minimum anchor, "
    "yellow at the median, red at the maximum.",
    ANCHORS_HEADING + ":",
)


def _methodology_lines(anchors: Mapping[int, Optional[YearAnchors]]) -> list[str]:
    lines = [METHODOLOGY_HEADING, *METHODOLOGY_NOTES]
    lines.extend(f"{year}: {format_anchors(anchors[year])}" for year in sorted(anchors))
    return lines


def write_trend_analysis(
    ratios: Mapping[SchoolYearKey, tuple[RatioStatus, Optional[float]]],
    anchors: Mapping[int, Optional[YearAnchors]],
) -> SheetPayload:
    schools = sorted({k.school for k in ratios})
    years = sorted({k.year for k in ratios})
    rows: list[list[Any]] = [["School", *years]]
    for school in schools:
        row: list[Any] = [school]
        for year in years:
            entry = ratios.get(SchoolYearKey(school, year))
            row.append(None if entry is None else ratio_cell(*entry))
        rows.append(row)

    scales = []
    if schools:
        for offset, year in enumerate(years):
            year_anchors = anchors.get(year)
            if year_anchors is None:
                continue
            letter = get_column_letter(offset + 2)
            scales.append(
                ColorScale(
                    f"{letter}2:{letter}{len(schools) + 1}",
                    year_anchors.a_min,
                    year_anchors.b_median,
                    year_anchors.c_max,
                )
            )

    methodology_row = len(rows) + 2
    rows.append([])
    rows.extend([line] for line in _methodology_lines(anchors))
    return SheetPayload(
        TREND_SHEET,
        rows,
        bold_rows=(1, methodology_row),
        color_scales=scales,
        column_widths={1: 28},
    )


def report_columns(years: Sequence[int]) -> list[str]:
    titles = ["School", "Subject No.", "Subject"]
    for year in years:
        titles += [
            f"{year} Incl Oncosts",
            f"{year} Student Count",
            f"{year} Incl Oncosts Per Student",
        ]
    return titles


def write_report(subject_year: Mapping[SubjectYearKey, GroupTotals]) -> SheetPayload:
    years = sorted({k.year for k in subject_year})
    subjects = sorted({(k.school, k.subject_no, k.subject) for k in subject_year})
    rows: list[list[Any]] = [report_columns(years)]
    for school, subject_no, subject in subjects:
        row: list[Any] = [school, subject_no, subject]
        for year in years:
            totals = subject_year.get(SubjectYearKey(school, subject_no, subject, year))
            if totals is None:
                row += [None, None, None]
            else:
                row += [
                    money(totals.total_oncosts),
                    totals.total_students,
                    ratio_cell(*compute_ratio(totals)),
                ]
        rows.append(row)
    return SheetPayload(REPORT_SHEET, rows, bold_rows=(1,), column_widths={1: 28, 3: 32})


def write_fuzzy_bands(
    records: Sequence[BandedRecord],
    counts: Mapping[int, Mapping[BandLabel, int]],
) -> SheetPayload:
    rows: list[list[Any]] = [list(BANDS_HEADER)]
    for rec in records:
        m = rec.membership
        rows.append(
            [
                rec.key.school,
                rec.key.year,
                money(rec.ratio),
                round(m.mu_low, MU_DECIMALS),
                round(m.mu_medium, MU_DECIMALS),
                round(m.mu_high, MU_DECIMALS),
                rec.band.label.value,
                rec.band.score,
                money(rec.anchors.a_min),
                money(rec.anchors.b_median),
                money(rec.anchors.c_max),
            ]
        )
    rows.append([])
    heading_row = len(rows) + 1
    rows.append([BAND_COUNTS_HEADING])
    rows.append(list(BAND_COUNTS_HEADER))
    for year in sorted(counts):
        tally = counts[year]
        low, medium, high = (tally.get(label, 0) for label in BandLabel)
        rows.append([year, low, medium, high, low + medium + high])
    return SheetPayload(
        BANDS_SHEET,
        rows,
        bold_rows=(1, heading_row, heading_row + 1),
        column_widths={1: 28},
    )


def build_plan(
    payloads: Sequence[SheetPayload],
    include_processing_summary: bool = True,
) -> WorkbookPlan:
    """Arrange payloads in the fixed sheet order, dropping Processing Summary if asked."""
    by_name = {p.name: p for p in payloads}
    order = [TREND_SHEET, REPORT_SHEET, BANDS_SHEET]
    if include_processing_summary:
        order.insert(0, SUMMARY_SHEET)
    return WorkbookPlan(include_processing_summary, [by_name[name] for name in order])


def render(plan: WorkbookPlan) -> bytes:
    """Serialise ``plan`` to .xlsx bytes with fixed properties and archive metadata."""
    wb = Workbook()
    wb.remove(wb.active)
    bold = Font(bold=True)
    for payload in plan.sheets:
        ws = wb.create_sheet(payload.name)
        for row in payload.rows:
            ws.append(row)
        for r in payload.bold_rows:
            for cell in ws[r]:
                cell.font = bold
        for col, width in sorted(payload.column_widths.items()):
            ws.column_dimensions[get_column_letter(col)].width = width
        for scale in payload.color_scales:
            ws.conditional_formatting.add(
                scale.cell_range,
                ColorScaleRule(
                    start_type="num", start_value=scale.low, start_color=SCALE_LOW_COLOR,
                    mid_type="num", mid_value=scale.mid, mid_color=SCALE_MID_COLOR,
                    end_type="num", end_value=scale.high, end_color=SCALE_HIGH_COLOR,
                ),
            )
    wb.properties.creator = plan.creator
    wb.properties.lastModifiedBy = plan.creator
    wb.properties.created = plan.created_at
    wb.properties.modified = plan.modified_at

    raw = io.BytesIO()
    with zipfile.ZipFile(raw, "w", zipfile.ZIP_DEFLATED) as archive:
        ExcelWriter(wb, archive).write_data()

    out = io.BytesIO()
    with zipfile.ZipFile(raw) as src, zipfile.ZipFile(out, "w") as dst:
        for info in src.infolist():
            entry = zipfile.ZipInfo(info.filename, date_time=ZIP_TIMESTAMP)
            entry.compress_type = zipfile.ZIP_DEFLATED
            entry.create_system = 0
            entry.external_attr = 0
            dst.writestr(entry, src.read(info.filename), compresslevel=ZIP_LEVEL)
    return out.getvalue()


def save_workbook(plan: WorkbookPlan, output_path: str | Path) -> None:
    """Write the workbook via a temporary file in the target directory, then rename."""
    output_path = Path(output_path)
    output_path.parent.mkdir(parents=True, exist_ok=True)
    data = render(plan)
    fd, tmp = tempfile.mkstemp(prefix=f".{output_path.name}.", suffix=".tmp", dir=output_path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.chmod(tmp, 0o644)
        os.replace(tmp, output_path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
