"""Locate the extract table in an input workbook and stream the rows below it."""

from __future__ import annotations

import enum
import re
import zipfile
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterator, Mapping, Optional

import openpyxl
from openpyxl.utils.exceptions import InvalidFileException

SCAN_ROWS = 30
SCAN_COLS = 60


class LogicalField(enum.Enum):
    SCHOOL = "School"
    SUBJECT_NO = "Subject No."
    SUBJECT = "Subject"
    TEACHING_SESSION = "Teaching Session"
    INCL_ONCOSTS = "Incl Oncosts"
    STUDENT_COUNT = "Student Count"


# Header spellings accepted per field. Matching is case-insensitive, collapses
# internal whitespace and ignores one trailing period, so only genuinely
# different names need listing here.
HEADER_ALIASES: dict[LogicalField, tuple[str, ...]] = {
    LogicalField.SCHOOL: ("School",),
    LogicalField.SUBJECT_NO: ("Subject No.",),
    LogicalField.SUBJECT: ("Subject",),
    LogicalField.TEACHING_SESSION: ("Teaching Session",),
    LogicalField.INCL_ONCOSTS: ("Incl Oncosts",),
    LogicalField.STUDENT_COUNT: ("Student Count",),
}

_WS = re.compile(r"\s+")


class TableNotFound(ValueError):
    """No sheet has a header row covering every required field within the scan limits."""


class WorkbookReadError(OSError):
    """The input file could not be opened as an .xlsx workbook."""


def _normalise(text: str) -> str:
    text = _WS.sub(" ", text.strip()).casefold()
    if text.endswith("."):
        text = text[:-1].rstrip()
    return text


_ALIAS_INDEX: dict[str, LogicalField] = {
    _normalise(alias): field for field, aliases in HEADER_ALIASES.items() for alias in aliases
}


@dataclass(frozen=True)
class LocatedTable:
    sheet_name: str
    header_row_0based: int
    col_index: Mapping[LogicalField, int]


@dataclass(frozen=True)
class RawRow:
    cells: Mapping[LogicalField, Any]
    source_row_0based: int


def canonicalize_header(cell: Any) -> Optional[LogicalField]:
    """Map a header cell to its logical field, or ``None`` when it is not a required column."""
    if cell is None:
        return None
    if isinstance(cell, float) and cell.is_integer():
        cell = int(cell)
    text = _normalise(str(cell))
    if not text:
        return None
    return _ALIAS_INDEX.get(text)


@contextmanager
def open_workbook(path: str | Path) -> Iterator[Any]:
    """Open ``path`` in streaming (read-only) mode and close it afterwards."""
    try:
        wb = openpyxl.load_workbook(path, read_only=True, data_only=True)
    except (OSError, zipfile.BadZipFile, InvalidFileException, KeyError) as exc:
        raise WorkbookReadError(f"cannot read workbook {path}: {exc}") from exc
    try:
        yield wb
    finally:
        wb.close()


def match_header_row(values) -> Optional[dict[LogicalField, int]]:
    """Return the column map if ``values`` covers all fields; first column wins on duplicates."""
    col_map: dict[LogicalField, int] = {}
    for col, value in enumerate(values):
        field = canonicalize_header(value)
        if field is not None and field not in col_map:
            col_map[field] = col
    if len(col_map) == len(LogicalField):
        return col_map
    return None


def locate_table(wb, scan_rows: int = SCAN_ROWS, scan_cols: int = SCAN_COLS) -> LocatedTable:
    """Find the first sheet and row, in workbook order, holding the full header.

    Only the top ``scan_rows`` rows and leftmost ``scan_cols`` columns of each
    sheet are examined.

    Raises:
        TableNotFound: if no sheet within those limits has all six fields.
    """
    for ws in wb.worksheets:
        rows = ws.iter_rows(min_row=1, max_row=scan_rows, max_col=scan_cols, values_only=True)
        for r, values in enumerate(rows):
            col_map = match_header_row(values[:scan_cols])
            if col_map is not None:
                return LocatedTable(ws.title, r, col_map)
    raise TableNotFound(
        f"no header row with fields {[f.value for f in LogicalField]} "
        f"in the first {scan_rows} rows / {scan_cols} columns of any sheet"
    )


def stream_rows(wb, located: LocatedTable) -> Iterator[RawRow]:
    """Yield each worksheet row below the header, keeping only the mapped columns."""
    ws = wb[located.sheet_name]
    width = max(located.col_index.values()) + 1
    first = located.header_row_0based + 1
    mapping = tuple(located.col_index.items())
    rows = ws.iter_rows(min_row=first + 1, max_col=width, values_only=True)
    for offset, values in enumerate(rows):
        if len(values) < width:
            values = tuple(values) + (None,) * (width - len(values))
        yield RawRow({field: values[col] for field, col in mapping}, first + offset)
