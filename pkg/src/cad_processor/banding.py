"""Per-year anchors and Low/Medium/High fuzzy membership.

Anchors for a year are the minimum, median and maximum of that year's
eligible school-year ratios (status OK, finite, strictly positive). Each
eligible ratio gets three piecewise-linear weights in [0, 1]; the label is the
largest weight, ties going to Medium, then Low, then High.
"""

from __future__ import annotations

import enum
import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional

from .aggregate import RatioStatus, SchoolYearKey


class EmptyInput(ValueError):
    pass


class BandLabel(enum.Enum):
    LOW = "Low"
    MEDIUM = "Medium"
    HIGH = "High"


BAND_SCORE = {BandLabel.LOW: 0.0, BandLabel.MEDIUM: 0.5, BandLabel.HIGH: 1.0}
TIE_PRIORITY = (BandLabel.MEDIUM, BandLabel.LOW, BandLabel.HIGH)


@dataclass(frozen=True)
class YearAnchors:
    year: int
    a_min: float
    b_median: float
    c_max: float


@dataclass(frozen=True)
class Membership:
    mu_low: float
    mu_medium: float
    mu_high: float

    def weight(self, label: BandLabel) -> float:
        return {
            BandLabel.LOW: self.mu_low,
            BandLabel.MEDIUM: self.mu_medium,
            BandLabel.HIGH: self.mu_high,
        }[label]


@dataclass(frozen=True)
class Band:
    label: BandLabel
    score: float


@dataclass(frozen=True)
class BandedRecord:
    key: SchoolYearKey
    ratio: float
    membership: Membership
    band: Band
    anchors: YearAnchors


def median(values: Iterable[float]) -> float:
    ordered = sorted(values)
    n = len(ordered)
    if n == 0:
        raise EmptyInput("median of an empty sequence")
    mid = n // 2
    if n % 2:
        return ordered[mid]
    return (ordered[mid - 1] + ordered[mid]) / 2


def is_eligible(status: RatioStatus, ratio: Optional[float]) -> bool:
    return status is RatioStatus.OK and ratio is not None and math.isfinite(ratio) and ratio > 0


def compute_anchors(
    ratios: Mapping[SchoolYearKey, tuple[RatioStatus, Optional[float]]],
) -> dict[int, Optional[YearAnchors]]:
    """Anchors per year present in ``ratios``; ``None`` where a year has no eligible value."""
    eligible: dict[int, list[float]] = {}
    for key, (status, ratio) in ratios.items():
        bucket = eligible.setdefault(key.year, [])
        if is_eligible(status, ratio):
            bucket.append(ratio)
    anchors: dict[int, Optional[YearAnchors]] = {}
    for year in sorted(eligible):
        values = eligible[year]
        if values:
            anchors[year] = YearAnchors(year, min(values), median(values), max(values))
        else:
            anchors[year] = None
    return anchors


def mu_low(x: float, a: float, b: float) -> float:
    if x <= a:
        return 1.0
    if x >= b:
        return 0.0
    return (b - x) / (b - a)


def mu_medium(x: float, a: float, b: float, c: float) -> float:
    # Peak first: with a == b or b == c the zero-width side is skipped and the
    # function is 1 only at the median.
    if x == b:
        return 1.0
    if x <= a or x >= c:
        return 0.0
    if x < b:
        return (x - a) / (b - a)
    return (c - x) / (c - b)


def mu_high(x: float, b: float, c: float) -> float:
    if x >= c:
        return 1.0
    if x <= b:
        return 0.0
    return (x - b) / (c - b)


def memberships(x: float, anchors: YearAnchors) -> Membership:
    a, b, c = anchors.a_min, anchors.b_median, anchors.c_max
    return Membership(mu_low(x, a, b), mu_medium(x, a, b, c), mu_high(x, b, c))


def assign_band(m: Membership) -> Band:
    """Pick the label with the largest weight; exact ties follow TIE_PRIORITY."""
    best = TIE_PRIORITY[0]
    for label in TIE_PRIORITY[1:]:
        if m.weight(label) > m.weight(best):
            best = label
    return Band(best, BAND_SCORE[best])


def band_year(
    ratios: Mapping[SchoolYearKey, tuple[RatioStatus, Optional[float]]],
    anchors: Mapping[int, Optional[YearAnchors]],
) -> list[BandedRecord]:
    """One record per eligible school-year ratio in a year with anchors, sorted by (year, school)."""
    records = []
    for key in sorted(ratios, key=lambda k: (k.year, k.school)):
        status, ratio = ratios[key]
        year_anchors = anchors.get(key.year)
        if year_anchors is None or not is_eligible(status, ratio):
            continue
        m = memberships(ratio, year_anchors)
        records.append(BandedRecord(key, ratio, m, assign_band(m), year_anchors))
    return records


def band_counts(records: Iterable[BandedRecord]) -> dict[int, Counter]:
    """Per-year tally of labels, years ascending."""
    counts: dict[int, Counter] = {}
    for rec in records:
        counts.setdefault(rec.key.year, Counter())[rec.band.label] += 1
    return dict(sorted(counts.items()))
