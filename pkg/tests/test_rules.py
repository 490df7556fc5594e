import pytest
from hypothesis import given
from hypothesis import strategies as st

from cad_processor.ingest import LogicalField, RawRow
from cad_processor.rules import (
    CleanRow,
    DropReason,
    Dropped,
    classify_row,
    extract_year,
    is_summary_marker,
    to_float,
    to_int,
)


def year_oracle(text):
    """Split into maximal digit runs by hand and keep the first 4-long run in range."""
    runs, current = [], ""
    for ch in text:
        if "0" <= ch <= "9":
            current += ch
        else:
            if current:
                runs.append(current)
            current = ""
    if current:
        runs.append(current)
    for run in runs:
        if len(run) == 4 and 1900 <= int(run) <= 2099:
            return int(run)
    return None


@pytest.mark.parametrize(
    "session, year",
    [
        ("Autumn 2024", 2024),
        ("Session 12345", None),
        ("1899 then 2023", 2023),
        ("S1-2025/26", 2025),
        ("2100", None),
        ("1900", 1900),
        ("2099b", 2099),
        ("", None),
        (None, None),
        (2024, 2024),
        (2024.0, 2024),
    ],
)
def test_extract_year(session, year):
    assert extract_year(session) == year


@given(st.text(alphabet="0123456789 -/abc", max_size=24))
def test_extract_year_matches_oracle(text):
    assert extract_year(text) == year_oracle(text)


@pytest.mark.parametrize(
    "text, expected",
    [(" TOTAL ", True), ("Subtotal", False), ("result", True), ("Sum", True),
     ("Total cost", False), ("", False), (None, False)],
)
def test_is_summary_marker(text, expected):
    assert is_summary_marker(text) is expected


@pytest.mark.parametrize(
    "cell, expected",
    [
        (1234.5, (1234.5, False)),
        (7, (7.0, False)),
        ("  42.25 ", (42.25, False)),
        ("-3", (-3.0, False)),
        ("1e3", (1000.0, False)),
        ("", (0.0, True)),
        (None, (0.0, True)),
        ("n/a", (0.0, True)),
        ("1,200", (0.0, True)),
        ("$50", (0.0, True)),
        ("1_000", (0.0, True)),
        ("nan", (0.0, True)),
        (float("inf"), (0.0, True)),
        (True, (0.0, True)),
    ],
)
def test_to_float(cell, expected):
    assert to_float(cell) == expected


@pytest.mark.parametrize(
    "cell, expected",
    [
        (25, (25, False)),
        (25.0, (25, False)),
        ("12", (12, False)),
        ("12.0", (12, False)),
        (-3, (-3, False)),
        ("", (0, True)),
        (None, (0, True)),
        ("ten", (0, True)),
        (2.5, (0, True)),
        (False, (0, True)),
    ],
)
def test_to_int(cell, expected):
    value, missing = to_int(cell)
    assert (value, missing) == expected
    assert type(value) is int


def raw(school="School A", subject_no=101, subject="Maths", session="Autumn 2024",
        cost=100.0, students=10):
    values = [school, subject_no, subject, session, cost, students]
    return RawRow(dict(zip(LogicalField, values)), 1)


def test_kept_row_conversions():
    row = classify_row(raw(school="  School A ", subject_no=101.0, cost="", students=None))
    assert row == CleanRow("School A", "101", "Maths", 2024, 0.0, 0, True, True)


@pytest.mark.parametrize(
    "kwargs, reason",
    [
        ({"school": "Total"}, DropReason.SUMMARY_ROW),
        ({"subject": " result"}, DropReason.SUMMARY_ROW),
        ({"school": "Total", "subject_no": None}, DropReason.SUMMARY_ROW),
        ({"subject_no": "TOTAL"}, None),
        ({"subject": ""}, DropReason.MISSING_KEYS),
        ({"subject": "   "}, DropReason.MISSING_KEYS),
        ({"school": None}, DropReason.MISSING_KEYS),
        ({"subject_no": None, "session": "none"}, DropReason.MISSING_KEYS),
        ({"session": "TBC"}, DropReason.MISSING_YEAR),
        ({"session": "TBC", "students": -4}, DropReason.MISSING_YEAR),
        ({"students": -1}, DropReason.NEGATIVE_STUDENTS),
        ({"students": "-1"}, DropReason.NEGATIVE_STUDENTS),
        ({"students": 0}, None),
        ({"cost": -50}, None),
    ],
)
def test_classification_order(kwargs, reason):
    outcome = classify_row(raw(**kwargs))
    if reason is None:
        assert isinstance(outcome, CleanRow)
    else:
        assert isinstance(outcome, Dropped) and outcome.reason is reason


def test_negative_row_keeps_missing_cost_flag():
    assert classify_row(raw(cost=None, students=-2)) == Dropped(DropReason.NEGATIVE_STUDENTS, True)
    assert classify_row(raw(cost=5, students=-2)) == Dropped(DropReason.NEGATIVE_STUDENTS, False)


cells = st.one_of(
    st.none(),
    st.integers(-5, 5000),
    st.floats(allow_nan=True, allow_infinity=True),
    st.text(max_size=12),
    st.sampled_from(["Total", "2024", "Autumn 2023", " ", "n/a"]),
)


@given(st.lists(cells, min_size=6, max_size=6))
def test_classify_is_total_and_respects_invariants(values):
    outcome = classify_row(RawRow(dict(zip(LogicalField, values)), 0))
    assert classify_row(RawRow(dict(zip(LogicalField, values)), 99)) == outcome
    if isinstance(outcome, CleanRow):
        for key in (outcome.school, outcome.subject_no, outcome.subject):
            assert key and key == key.strip()
        assert 1900 <= outcome.year <= 2099
        assert outcome.students >= 0
        if outcome.cost_missing:
            assert outcome.cost == 0.0
        if outcome.students_missing:
            assert outcome.students == 0
    else:
        assert isinstance(outcome.reason, DropReason)
