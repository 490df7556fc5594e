"""Fold classified rows into subject-year and school-year totals."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional

from .rules import CleanRow, DropReason, Dropped, Outcome


class SubjectYearKey(NamedTuple):
    school: str
    subject_no: str
    subject: str
    year: int


class SchoolYearKey(NamedTuple):
    school: str
    year: int


@dataclass(frozen=True)
class GroupTotals:
    total_oncosts: float = 0.0
    total_students: int = 0


class RatioStatus(enum.Enum):
    OK = "OK"
    NO_ACTIVITY = "No activity"
    UNDEFINED = "Undefined (0 students)"


@dataclass
class QualityCounters:
    total_rows_seen: int = 0
    rows_dropped_summary_rows: int = 0
    rows_dropped_missing_keys: int = 0
    rows_dropped_missing_year: int = 0
    rows_with_missing_cost: int = 0
    rows_with_missing_students: int = 0
    rows_with_negative_students: int = 0
    subject_year_groups: int = 0
    school_year_groups: int = 0
    groups_undefined: int = 0
    groups_no_activity: int = 0

    @property
    def rows_dropped(self) -> int:
        return (
            self.rows_dropped_summary_rows
            + self.rows_dropped_missing_keys
            + self.rows_dropped_missing_year
            + self.rows_with_negative_students
        )

    @property
    def rows_kept(self) -> int:
        return self.total_rows_seen - self.rows_dropped


@dataclass
class FoldResult:
    subject_year: dict[SubjectYearKey, GroupTotals] = field(default_factory=dict)
    school_year: dict[SchoolYearKey, GroupTotals] = field(default_factory=dict)
    counters: QualityCounters = field(default_factory=QualityCounters)


_DROP_COUNTER = {
    DropReason.SUMMARY_ROW: "rows_dropped_summary_rows",
    DropReason.MISSING_KEYS: "rows_dropped_missing_keys",
    DropReason.MISSING_YEAR: "rows_dropped_missing_year",
    DropReason.NEGATIVE_STUDENTS: "rows_with_negative_students",
}


def compute_ratio(totals: GroupTotals) -> tuple[RatioStatus, Optional[float]]:
    """Cost per student with the zero-denominator cases named.

    A group with no students and a non-zero cost (negative included) is
    Undefined; only an exact zero cost makes it No activity.
    """
    if totals.total_students > 0:
        return RatioStatus.OK, totals.total_oncosts / totals.total_students
    if totals.total_oncosts == 0:
        return RatioStatus.NO_ACTIVITY, 0.0
    return RatioStatus.UNDEFINED, None


def fold(outcomes: Iterable[Outcome]) -> FoldResult:
    """Stream classified rows into group totals and data-quality counters.

    Rows are added in the order given; callers feed source order so the
    floating-point summation order is fixed for identical inputs.
    """
    counters = QualityCounters()
    subject_acc: dict[SubjectYearKey, list] = {}
    school_acc: dict[SchoolYearKey, list] = {}

    for outcome in outcomes:
        counters.total_rows_seen += 1
        if isinstance(outcome, Dropped):
            name = _DROP_COUNTER[outcome.reason]
            setattr(counters, name, getattr(counters, name) + 1)
            if outcome.cost_missing:
                counters.rows_with_missing_cost += 1
            continue

        row: CleanRow = outcome
        counters.rows_with_missing_cost += row.cost_missing
        counters.rows_with_missing_students += row.students_missing
        for acc, key in (
            (subject_acc, SubjectYearKey(row.school, row.subject_no, row.subject, row.year)),
            (school_acc, SchoolYearKey(row.school, row.year)),
        ):
            slot = acc.get(key)
            if slot is None:
                acc[key] = [row.cost, row.students]
            else:
                slot[0] += row.cost
                slot[1] += row.students

    result = FoldResult(
        subject_year={k: GroupTotals(c, s) for k, (c, s) in sorted(subject_acc.items())},
        school_year={k: GroupTotals(c, s) for k, (c, s) in sorted(school_acc.items())},
        counters=counters,
    )
    counters.subject_year_groups = len(result.subject_year)
    counters.school_year_groups = len(result.school_year)
    for totals in result.school_year.values():
        status, _ = compute_ratio(totals)
        if status is RatioStatus.UNDEFINED:
            counters.groups_undefined += 1
        elif status is RatioStatus.NO_ACTIVITY:
            counters.groups_no_activity += 1
    return result


def school_year_ratios(
    school_year: dict[SchoolYearKey, GroupTotals],
) -> dict[SchoolYearKey, tuple[RatioStatus, Optional[float]]]:
    return {key: compute_ratio(totals) for key, totals in sorted(school_year.items())}
