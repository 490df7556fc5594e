import math
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from cad_processor.aggregate import (
    GroupTotals,
    QualityCounters,
    RatioStatus,
    SchoolYearKey,
    SubjectYearKey,
    compute_ratio,
    fold,
)
from cad_processor.rules import CleanRow, DropReason, Dropped


def kept(school="S", no="1", subject="X", year=2024, cost=10.0, students=1, **flags):
    return CleanRow(school, no, subject, year, cost, students, **flags)


def test_two_subjects_one_school_year():
    result = fold([kept(subject="A"), kept(subject="B")])
    assert result.counters.school_year_groups == 1
    assert result.counters.subject_year_groups == 2
    assert result.school_year[SchoolYearKey("S", 2024)] == GroupTotals(20.0, 2)


def test_empty_input():
    result = fold([])
    assert result.subject_year == {} and result.school_year == {}
    assert result.counters == QualityCounters()


def test_counters_tally_reasons_and_flags():
    outcomes = (
        [Dropped(DropReason.SUMMARY_ROW)] * 3
        + [Dropped(DropReason.MISSING_KEYS)] * 2
        + [Dropped(DropReason.MISSING_YEAR)]
        + [Dropped(DropReason.NEGATIVE_STUDENTS, cost_missing=True)]
        + [kept(cost=0.0, cost_missing=True), kept(students=0, students_missing=True), kept()]
    )
    c = fold(outcomes).counters
    assert (c.total_rows_seen, c.rows_dropped_summary_rows, c.rows_dropped_missing_keys,
            c.rows_dropped_missing_year, c.rows_with_negative_students) == (10, 3, 2, 1, 1)
    assert c.rows_with_missing_cost == 2
    assert c.rows_with_missing_students == 1
    assert c.rows_kept == 3


@pytest.mark.parametrize(
    "cost, students, status, ratio",
    [
        (50000, 10, RatioStatus.OK, 5000.0),
        (0, 0, RatioStatus.NO_ACTIVITY, 0.0),
        (20000, 0, RatioStatus.UNDEFINED, None),
        (0, 12, RatioStatus.OK, 0.0),
        (-10, 0, RatioStatus.UNDEFINED, None),
    ],
)
def test_compute_ratio(cost, students, status, ratio):
    assert compute_ratio(GroupTotals(cost, students)) == (status, ratio)


def test_boundary_group_counts_use_school_year_groups():
    outcomes = [
        kept(school="A", cost=0.0, students=0),
        kept(school="B", cost=5.0, students=0),
        kept(school="C", subject="p", cost=5.0, students=0),
        kept(school="C", subject="q", cost=5.0, students=2),
    ]
    c = fold(outcomes).counters
    assert (c.groups_no_activity, c.groups_undefined) == (1, 1)


rows = st.lists(
    st.builds(
        kept,
        school=st.sampled_from("ABC"),
        no=st.sampled_from(["1", "2"]),
        subject=st.sampled_from(["x", "y"]),
        year=st.integers(2022, 2025),
        cost=st.integers(0, 10**6).map(float),
        students=st.integers(0, 50),
    ),
    max_size=40,
)


@given(rows, st.randoms(use_true_random=False))
def test_fold_is_order_insensitive_for_exact_values(items, rnd):
    shuffled = list(items)
    rnd.shuffle(shuffled)
    a, b = fold(items), fold(shuffled)
    assert a.subject_year == b.subject_year
    assert a.school_year == b.school_year
    assert list(a.school_year) == list(b.school_year)


@given(rows)
def test_school_year_equals_sum_of_subject_years(items):
    result = fold(items)
    for key, totals in result.school_year.items():
        parts = [t for k, t in result.subject_year.items() if (k.school, k.year) == key]
        assert totals.total_students == sum(p.total_students for p in parts)
        assert math.isclose(totals.total_oncosts, math.fsum(p.total_oncosts for p in parts))
    assert result.counters.school_year_groups <= result.counters.subject_year_groups


def test_fold_accepts_generator_and_float_costs():
    rng = random.Random(3)
    items = [kept(school=rng.choice("AB"), cost=rng.uniform(0, 100)) for _ in range(500)]
    result = fold(iter(items))
    for key, totals in result.school_year.items():
        expected = math.fsum(r.cost for r in items if r.school == key.school)
        assert math.isclose(totals.total_oncosts, expected, rel_tol=1e-12)
    assert list(result.subject_year) == sorted(result.subject_year)
    assert all(isinstance(k, SubjectYearKey) for k in result.subject_year)


@given(st.integers(0, 10**9), st.integers(0, 10**4))
def test_exactly_one_status(cost, students):
    status, ratio = compute_ratio(GroupTotals(float(cost), students))
    assert (status is RatioStatus.OK) == (students > 0)
    assert (status is RatioStatus.NO_ACTIVITY) == (cost == 0 and students == 0)
    assert (status is RatioStatus.UNDEFINED) == (cost > 0 and students == 0)
    assert (ratio is None) == (status is RatioStatus.UNDEFINED)
