"""Row classification and value conversion.

A row is checked in a fixed order (summary marker, missing keys, missing year,
negative students) and the first failing check decides the drop reason.
Cost and student-count cells that are blank or non-numeric are treated as
zero and flagged, never dropped.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass
from typing import Any, Optional, Union

from .ingest import LogicalField, RawRow

YEAR_MIN = 1900
YEAR_MAX = 2099
SUMMARY_MARKERS = frozenset({"total", "sum", "result"})

_YEAR_TOKEN = re.compile(r"(?<!\d)(\d{4})(?!\d)")
# Plain decimal notation only: no thousands separators, currency or underscores.
_NUMBER = re.compile(r"[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?")


class DropReason(enum.Enum):
    SUMMARY_ROW = "SummaryRow"
    MISSING_KEYS = "MissingKeys"
    MISSING_YEAR = "MissingYear"
    NEGATIVE_STUDENTS = "NegativeStudents"


@dataclass(frozen=True)
class CleanRow:
    school: str
    subject_no: str
    subject: str
    year: int
    cost: float
    students: int
    cost_missing: bool = False
    students_missing: bool = False


@dataclass(frozen=True)
class Dropped:
    reason: DropReason
    # Cost is converted before the student-count check, so a row dropped for a
    # negative count can still carry a missing-cost flag.
    cost_missing: bool = False


Outcome = Union[CleanRow, Dropped]


def cell_text(value: Any) -> str:
    """Render a cell as trimmed text; integral numbers lose their ``.0``."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, float) and value.is_integer():
        return str(int(value))
    return str(value).strip()


def extract_year(teaching_session: Any) -> Optional[int]:
    """First standalone four-digit token in [1900, 2099], or None."""
    text = cell_text(teaching_session)
    for match in _YEAR_TOKEN.finditer(text):
        year = int(match.group(1))
        if YEAR_MIN <= year <= YEAR_MAX:
            return year
    return None


def is_summary_marker(text: Any) -> bool:
    return cell_text(text).casefold() in SUMMARY_MARKERS


def _number(cell: Any) -> Optional[float]:
    if cell is None or isinstance(cell, bool):
        return None
    if isinstance(cell, (int, float)):
        value = float(cell)
    elif isinstance(cell, str):
        text = cell.strip()
        if not _NUMBER.fullmatch(text):
            return None
        value = float(text)
    else:
        return None
    return value if math.isfinite(value) else None


def to_float(cell: Any) -> tuple[float, bool]:
    """Return ``(value, missing)``; blank or non-numeric cells give ``(0.0, True)``."""
    if isinstance(cell, int) and not isinstance(cell, bool):
        return float(cell), False
    value = _number(cell)
    if value is None:
        return 0.0, True
    return value, False


def to_int(cell: Any) -> tuple[int, bool]:
    """Return ``(value, missing)``; non-integral or non-numeric cells give ``(0, True)``."""
    if isinstance(cell, int) and not isinstance(cell, bool):
        return cell, False
    value = _number(cell)
    if value is None or not value.is_integer():
        return 0, True
    return int(value), False


def classify_row(raw: RawRow) -> Outcome:
    cells = raw.cells
    school = cell_text(cells.get(LogicalField.SCHOOL))
    subject_no = cell_text(cells.get(LogicalField.SUBJECT_NO))
    subject = cell_text(cells.get(LogicalField.SUBJECT))

    if is_summary_marker(school) or is_summary_marker(subject):
        return Dropped(DropReason.SUMMARY_ROW)
    if not school or not subject_no or not subject:
        return Dropped(DropReason.MISSING_KEYS)

    year = extract_year(cells.get(LogicalField.TEACHING_SESSION))
    if year is None:
        return Dropped(DropReason.MISSING_YEAR)

    cost, cost_missing = to_float(cells.get(LogicalField.INCL_ONCOSTS))
    students, students_missing = to_int(cells.get(LogicalField.STUDENT_COUNT))
    if students < 0:
        return Dropped(DropReason.NEGATIVE_STUDENTS, cost_missing=cost_missing)

    return CleanRow(
        school=school,
        subject_no=subject_no,
        subject=subject,
        year=year,
        cost=cost,
        students=students,
        cost_missing=cost_missing,
        students_missing=students_missing,
    )
