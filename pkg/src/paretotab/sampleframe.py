"""Estimation of the population of potential tax units.

The tail fractiles in estimation need the number of tax units there would
be if everyone filed.  Post-1950, when nearly all adults file, that is the
adult population minus joint returns (each joint return folds two adults
into one unit; the assumption is that non-filers, being low income, would
file separately).  Before 1950 joint-return counts are unrepresentative, so
the joint share is predicted from the married-couple share: regress
log(J/A) on log(M/A) over the post-1950 years and back-cast the fitted
value.  A lower-bound alternative treats every married couple as one unit
(n = A - M).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

FIELDS = ("adults", "joint_returns", "married_couples", "total_returns")


@dataclass(frozen=True)
class YearRecord:
    """One year of demographic inputs; any field may be missing."""

    year: int
    adults: int | None = None
    joint_returns: int | None = None
    married_couples: int | None = None
    total_returns: int | None = None

    def __post_init__(self):
        for name in FIELDS:
            value = getattr(self, name)
            if value is not None and value <= 0:
                raise ValueError(f"{name} must be positive when present, got {value}")
        if (
            self.joint_returns is not None
            and self.total_returns is not None
            and self.joint_returns > self.total_returns
        ):
            raise ValueError(
                f"{self.year}: joint returns {self.joint_returns} exceed "
                f"total returns {self.total_returns}"
            )


@dataclass(frozen=True)
class DemographicSeries:
    """Per-year records, ascending and unique in year."""

    records: tuple[YearRecord, ...]

    def __post_init__(self):
        years = [r.year for r in self.records]
        if any(b <= a for a, b in zip(years, years[1:])):
            raise ValueError("records must be strictly ascending in year")

    def record(self, year: int) -> YearRecord:
        for r in self.records:
            if r.year == year:
                return r
        raise ValueError(f"no record for year {year}")

    def value(self, field: str, year: int) -> int | None:
        if field not in FIELDS:
            raise ValueError(f"unknown field {field!r}")
        try:
            return getattr(self.record(year), field)
        except ValueError:
            return None

    @property
    def years(self) -> tuple[int, ...]:
        return tuple(r.year for r in self.records)


@dataclass(frozen=True)
class JointShareFit:
    """OLS fit of log(joint share) on log(married share)."""

    intercept: float
    slope: float
    r_squared: float
    years_used: tuple[int, ...]
    warnings: tuple[str, ...] = ()


def read_demographics(path: str | Path) -> DemographicSeries:
    """Read the CSV schema ``year,adults,joint_returns,married_couples,
    total_returns`` with blank cells for missing values."""
    records = []
    with open(path, newline="", encoding="utf-8-sig") as f:
        reader = csv.DictReader(f)
        for lineno, row in enumerate(reader, start=2):
            try:
                values = {
                    name: int(row[name]) if (row.get(name) or "").strip() else None
                    for name in FIELDS
                }
                records.append(YearRecord(year=int(row["year"]), **values))
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed row: {exc}") from exc
    if not records:
        raise ValueError(f"{path}: no data rows")
    records.sort(key=lambda r: r.year)
    return DemographicSeries(records=tuple(records))


def fit_joint_share_regression(
    series: DemographicSeries, from_year: int = 1950
) -> JointShareFit:
    """OLS of log(J/A) on log(M/A) over years >= from_year with full data."""
    rows = [
        r
        for r in series.records
        if r.year >= from_year
        and r.adults is not None
        and r.joint_returns is not None
        and r.married_couples is not None
    ]
    if len(rows) < 2:
        raise ValueError(
            f"need at least 2 years with adults, joint returns, and married couples "
            f"from {from_year}; have {len(rows)}"
        )
    warnings = ()
    if len(rows) < 3:
        warnings = ("fewer than 3 regression years; no degrees of freedom to spare",)
    x = np.array([math.log(r.married_couples / r.adults) for r in rows])
    y = np.array([math.log(r.joint_returns / r.adults) for r in rows])
    if np.ptp(x) == 0.0:
        raise ValueError("married share is constant; regressor is degenerate")
    design = np.column_stack([np.ones_like(x), x])
    beta, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ beta
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r_squared = 1.0 if ss_tot == 0.0 else 1.0 - float(resid @ resid) / ss_tot
    return JointShareFit(
        intercept=float(beta[0]),
        slope=float(beta[1]),
        r_squared=r_squared,
        years_used=tuple(r.year for r in rows),
        warnings=warnings,
    )


def _require(record: YearRecord, field: str) -> int:
    value = getattr(record, field)
    if value is None:
        raise ValueError(f"{field} missing for year {record.year}")
    return value


def potential_units(
    series: DemographicSeries,
    year: int,
    cutover: int = 1950,
    fit: JointShareFit | None = None,
) -> int:
    """Potential tax units: A - J from the cutover on, A - Jhat before it.

    Jhat back-casts the joint returns from the married-couple share through
    the post-cutover regression; pass a precomputed ``fit`` to avoid
    refitting in a loop.
    """
    record = series.record(year)
    adults = _require(record, "adults")
    if year >= cutover:
        return adults - _require(record, "joint_returns")
    married = _require(record, "married_couples")
    if fit is None:
        fit = fit_joint_share_regression(series, from_year=cutover)
    jhat = adults * math.exp(fit.intercept + fit.slope * math.log(married / adults))
    return adults - int(round(jhat))


def alt_units(series: DemographicSeries, year: int) -> int:
    """Lower-bound population treating every married couple as one unit."""
    record = series.record(year)
    return _require(record, "adults") - _require(record, "married_couples")


def interpolate_intercensal(series: DemographicSeries, field: str, year: int) -> float:
    """Fill a missing year geometrically (linear interpolation of logs).

    Exact at years where the field is present; raises when no years with
    data bracket the query.
    """
    if field not in FIELDS:
        raise ValueError(f"unknown field {field!r}")
    known = [(r.year, getattr(r, field)) for r in series.records if getattr(r, field) is not None]
    for y, v in known:
        if y == year:
            return float(v)
    before = [(y, v) for y, v in known if y < year]
    after = [(y, v) for y, v in known if y > year]
    if not before or not after:
        raise ValueError(f"no data bracketing year {year} for {field}")
    y0, v0 = before[-1]
    y1, v1 = after[0]
    w = (year - y0) / (y1 - y0)
    return math.exp((1.0 - w) * math.log(v0) + w * math.log(v1))
