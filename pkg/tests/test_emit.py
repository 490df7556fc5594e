import io
import zipfile
from collections import Counter

import pytest
from openpyxl import load_workbook

from cad_processor import emit
from cad_processor.aggregate import (
    GroupTotals,
    QualityCounters,
    RatioStatus,
    SchoolYearKey,
    SubjectYearKey,
)
from cad_processor.banding import BandLabel, YearAnchors, band_counts, band_year, compute_anchors

DIGEST = "ab" * 32


def sample_plan(include_summary=True):
    ratios = {
        SchoolYearKey("A", 2023): (RatioStatus.OK, 10.0),
        SchoolYearKey("B", 2023): (RatioStatus.OK, 20.0),
        SchoolYearKey("C", 2023): (RatioStatus.OK, 40.0),
        SchoolYearKey("A", 2024): (RatioStatus.UNDEFINED, None),
        SchoolYearKey("B", 2024): (RatioStatus.NO_ACTIVITY, 0.0),
    }
    subject_year = {
        SubjectYearKey("A", "1", "X", 2023): GroupTotals(100.004, 10),
        SubjectYearKey("A", "1", "X", 2024): GroupTotals(5.0, 0),
        SubjectYearKey("B", "2", "Y", 2023): GroupTotals(200.0, 10),
    }
    anchors = compute_anchors(ratios)
    records = band_year(ratios, anchors)
    counters = QualityCounters(total_rows_seen=9, rows_dropped_summary_rows=1)
    payloads = [
        emit.write_processing_summary(emit.SummaryInfo(DIGEST, "data", 0), counters, anchors),
        emit.write_trend_analysis(ratios, anchors),
        emit.write_report(subject_year),
        emit.write_fuzzy_bands(records, band_counts(records)),
    ]
    return emit.build_plan(payloads, include_processing_summary=include_summary)


@pytest.fixture(scope="module")
def workbook():
    return load_workbook(io.BytesIO(emit.render(sample_plan())))


def test_sheet_order(workbook):
    assert workbook.sheetnames == ["Processing Summary", "Trend Analysis", "Report", "Fuzzy Bands"]


def test_without_summary():
    wb = load_workbook(io.BytesIO(emit.render(sample_plan(include_summary=False))))
    assert wb.sheetnames == ["Trend Analysis", "Report", "Fuzzy Bands"]


def test_summary_layout(workbook):
    ws = workbook["Processing Summary"]
    assert ws["B3"].value == DIGEST
    assert (ws["B4"].value, ws["B5"].value) == ("data", 1)
    assert ws["B6"].value == 9 and ws["B7"].value == 1
    assert ws["A16"].value == "Subject-Year groups"
    assert ws["A17"].value == "School-Year groups"
    assert ws["A20"].value == emit.ANCHORS_HEADING
    assert (ws["A21"].value, ws["B21"].value) == (2023, "min 10.0, median 20.0, max 40.0")
    assert (ws["A22"].value, ws["B22"].value) == (2024, "No finite, positive values")
    assert ws["A20"].font.bold


def test_counter_rows_cover_six_to_seventeen():
    assert len(emit.counter_rows(QualityCounters())) == 17 - 6 + 1


def test_trend_cells_and_scales(workbook):
    ws = workbook["Trend Analysis"]
    assert [c.value for c in ws[1]] == ["School", 2023, 2024]
    assert [c.value for c in ws[2]] == ["A", 10, None]
    assert [c.value for c in ws[3]] == ["B", 20, 0]
    assert ws["C4"].value is None
    ranges = [str(r.sqref) for r in ws.conditional_formatting]
    assert ranges == ["B2:B4"]
    rule = ws.conditional_formatting["B2:B4"][0]
    assert [float(v.val) for v in rule.colorScale.cfvo] == [10.0, 20.0, 40.0]
    assert ws["A6"].value == emit.METHODOLOGY_HEADING


def test_report_columns_and_rounding(workbook):
    ws = workbook["Report"]
    assert ws["D1"].value == "2023 Incl Oncosts"
    assert ws["I1"].value == "2024 Incl Oncosts Per Student"
    assert [c.value for c in ws[2]] == ["A", "1", "X", 100.0, 10, 10.0, 5, 0, None]
    assert [c.value for c in ws[3]][6:] == [None, None, None]


def test_band_rows_and_counts(workbook):
    ws = workbook["Fuzzy Bands"]
    assert tuple(c.value for c in ws[1]) == emit.BANDS_HEADER
    labels = [ws.cell(r, 7).value for r in range(2, 5)]
    assert labels == ["Low", "Medium", "High"]
    assert ws["A6"].value == emit.BAND_COUNTS_HEADING
    assert [c.value for c in ws[7]][:5] == list(emit.BAND_COUNTS_HEADER)
    assert [c.value for c in ws[8]][:5] == [2023, 1, 1, 1, 3]


def test_band_counts_missing_labels_are_zero():
    payload = emit.write_fuzzy_bands([], {2025: Counter({BandLabel.HIGH: 2})})
    assert payload.rows[-1] == [2025, 0, 0, 2, 2]


@pytest.mark.parametrize(
    "anchors, text",
    [
        (None, "No finite, positive values"),
        (YearAnchors(2023, 9, 14, 28), "min 9, median 14, max 28"),
        (YearAnchors(2023, 9.0, 14.0, 28.0), "min 9.0, median 14.0, max 28.0"),
        (YearAnchors(2023, 1 / 3, 2.005, 1e6), "min 0.33, median 2.0, max 1000000.0"),
    ],
)
def test_format_anchors(anchors, text):
    assert emit.format_anchors(anchors) == text


def test_render_is_deterministic_and_fixed():
    first, second = emit.render(sample_plan()), emit.render(sample_plan())
    assert first == second
    with zipfile.ZipFile(io.BytesIO(first)) as zf:
        assert all(i.date_time == emit.ZIP_TIMESTAMP for i in zf.infolist())
        core = zf.read("docProps/core.xml").decode()
    assert "cad-processor" in core and "2000-01-01T00:00:00Z" in core


def test_save_is_atomic_and_cleans_up(tmp_path):
    target = tmp_path / "out" / "book.xlsx"
    emit.save_workbook(sample_plan(), target)
    assert target.read_bytes() == emit.render(sample_plan())
    assert [p.name for p in target.parent.iterdir()] == ["book.xlsx"]
    assert oct(target.stat().st_mode & 0o777) == oct(0o644)
