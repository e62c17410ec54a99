"""Data model for tabulated income summaries and their cleaning transforms.

A tabulation holds one year of one income concept (total income, wages,
capital, ...) published as income groups in descending order: per group, the
number of tax returns and the total income accruing to them in thousands of
currency units.  Counts and totals are stored as integers so that merges and
conservation checks are exact; estimation converts to floating point at its
own boundary.

The canonical on-disk form is a CSV with columns ``threshold,count,
total_thousands`` (descending, an empty threshold cell marking the unranked
bottom row) plus a JSON sidecar ``<name>.meta.json`` carrying the year,
concept, published grand totals, and optionally the population size.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace
from pathlib import Path

CONCEPTS = ("agi", "wages", "capital", "other")

#: Logical column name -> CSV header used by :func:`parse_tabulation`.
DEFAULT_SCHEMA = {"threshold": "threshold", "count": "count", "total": "total_thousands"}

# Published grand totals disagree with the column sums by a few units in the
# last printed digit; deltas within this many units pass validation.
ROUNDING_TOLERANCE = 5


class TabulationError(ValueError):
    """Malformed input file or invalid tabulation transform."""


@dataclass(frozen=True)
class IncomeGroup:
    """One income bracket.

    ``lower_threshold`` is the bracket's lower bound in currency units; it is
    absent (None) for the unranked bottom row and for tabulations whose
    source publishes no bracket bounds.  ``total`` is in thousands and may be
    negative (deficit rows, derived capital income in low brackets).
    """

    lower_threshold: int | None
    count: int
    total: int

    def __post_init__(self):
        if self.lower_threshold is not None and self.lower_threshold <= 0:
            raise TabulationError(f"threshold must be positive, got {self.lower_threshold}")
        if self.count < 0:
            raise TabulationError(f"count must be nonnegative, got {self.count}")


@dataclass(frozen=True)
class Tabulation:
    """One year x one concept of grouped income data, richest group first."""

    year: int
    concept: str
    groups: tuple[IncomeGroup, ...]
    grand_total_count: int
    grand_total_income: int
    population_n: int | None = None

    def __post_init__(self):
        if self.concept not in CONCEPTS:
            raise TabulationError(f"unknown concept {self.concept!r}, expected one of {CONCEPTS}")
        if not self.groups:
            raise TabulationError("tabulation has no groups")
        if self.population_n is not None and self.population_n <= 0:
            raise TabulationError("population_n must be positive when present")
        thresholds = [g.lower_threshold for g in self.groups]
        present = [t for t in thresholds if t is not None]
        if present:
            # Ranked tabulation: every group except an optional trailing
            # bottom row carries a threshold, strictly decreasing.
            if any(t is None for t in thresholds[:-1]):
                raise TabulationError("threshold missing outside the bottom row")
            if any(b >= a for a, b in zip(present, present[1:])):
                raise TabulationError("thresholds are not strictly decreasing")
        # else: unranked tabulation (no published thresholds); the stored
        # order is the ranking and the last row is treated as the bottom row.

    @property
    def threshold_groups(self) -> tuple[IncomeGroup, ...]:
        """All groups except the unranked bottom row."""
        if self.bottom_row is None:
            return self.groups
        return self.groups[:-1]

    @property
    def bottom_row(self) -> IncomeGroup | None:
        last = self.groups[-1]
        return last if last.lower_threshold is None else None

    @property
    def num_threshold_groups(self) -> int:
        return len(self.threshold_groups)


@dataclass(frozen=True)
class CumulativeView:
    """Cumulative counts and incomes from the top of a tabulation.

    ``counts[k-1]`` is the number of returns in groups 1..k and
    ``totals[k-1]`` their total income (thousands); ``thresholds`` aligns the
    groups' lower bounds.  Counts are strictly increasing once zero-count
    groups have been merged; totals are strictly increasing whenever all
    included groups have positive income.
    """

    counts: tuple[int, ...]
    totals: tuple[int, ...]
    thresholds: tuple[int | None, ...]

    def __len__(self) -> int:
        return len(self.counts)


@dataclass(frozen=True)
class TotalsReport:
    """Result of checking column sums against published grand totals."""

    passed: bool
    count_delta: int
    income_delta: int
    tolerance: int
    failing_columns: tuple[str, ...]


def parse_tabulation(path: str | Path, schema: dict[str, str] | None = None) -> Tabulation:
    """Read a tabulation CSV plus its ``.meta.json`` sidecar.

    Args:
        path: CSV with one header row; columns per ``schema`` (count and
            total required, threshold optional/empty for the bottom row).
        schema: mapping of logical names (``threshold``, ``count``,
            ``total``) to the file's headers; defaults to DEFAULT_SCHEMA.

    Rows are sorted descending by threshold on load, bottom row last, so a
    shuffled but otherwise valid file parses to the same tabulation.
    """
    path = Path(path)
    schema = dict(DEFAULT_SCHEMA, **(schema or {}))
    meta_path = path.with_suffix(".meta.json")
    if not meta_path.exists():
        raise TabulationError(f"missing metadata sidecar {meta_path}")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))

    with open(path, newline="", encoding="utf-8-sig") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None:
            raise TabulationError(f"{path}: empty file")
        for logical in ("count", "total"):
            if schema[logical] not in reader.fieldnames:
                raise TabulationError(f"{path}: missing column {schema[logical]!r}")
        has_threshold_col = schema["threshold"] in reader.fieldnames
        groups = []
        for lineno, row in enumerate(reader, start=2):
            try:
                raw_thr = (row.get(schema["threshold"]) or "").strip() if has_threshold_col else ""
                threshold = int(raw_thr) if raw_thr else None
                count = int(row[schema["count"]].strip())
                total = int(row[schema["total"]].strip())
            except (TypeError, ValueError, AttributeError, KeyError) as exc:
                raise TabulationError(f"{path}:{lineno}: malformed row: {exc}") from exc
            groups.append(IncomeGroup(threshold, count, total))
    if not groups:
        raise TabulationError(f"{path}: no data rows")

    bottoms = [g for g in groups if g.lower_threshold is None]
    ranked = [g for g in groups if g.lower_threshold is not None]
    if ranked and len(bottoms) > 1:
        raise TabulationError(f"{path}: more than one bottom (no-threshold) row")
    ranked.sort(key=lambda g: g.lower_threshold, reverse=True)

    return Tabulation(
        year=int(meta["year"]),
        concept=str(meta["concept"]),
        groups=tuple(ranked + bottoms),
        grand_total_count=int(meta["grand_total_count"]),
        grand_total_income=int(meta["grand_total_income_thousands"]),
        population_n=int(meta["population_n"]) if meta.get("population_n") else None,
    )


def write_tabulation(t: Tabulation, path: str | Path) -> None:
    """Write the canonical CSV + sidecar form (round-trips through parse)."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["threshold", "count", "total_thousands"])
        for g in t.groups:
            thr = "" if g.lower_threshold is None else g.lower_threshold
            writer.writerow([thr, g.count, g.total])
    meta = {
        "year": t.year,
        "concept": t.concept,
        "grand_total_count": t.grand_total_count,
        "grand_total_income_thousands": t.grand_total_income,
    }
    if t.population_n is not None:
        meta["population_n"] = t.population_n
    path.with_suffix(".meta.json").write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def validate_totals(t: Tabulation, tolerance: int = ROUNDING_TOLERANCE) -> TotalsReport:
    """Compare group sums against the published grand totals per column."""
    count_delta = sum(g.count for g in t.groups) - t.grand_total_count
    income_delta = sum(g.total for g in t.groups) - t.grand_total_income
    failing = tuple(
        name
        for name, delta in (("count", count_delta), ("total", income_delta))
        if abs(delta) > tolerance
    )
    return TotalsReport(
        passed=not failing,
        count_delta=count_delta,
        income_delta=income_delta,
        tolerance=tolerance,
        failing_columns=failing,
    )


def merge_zero_count_groups(t: Tabulation) -> Tabulation:
    """Absorb zero-count groups so every remaining group has count >= 1.

    A zero-count group's total is added to the next nonzero group below it;
    zero groups trailing below the last nonzero group merge upward instead.
    Merged groups keep the lowest threshold of their span, so counts, totals,
    and bracket semantics are conserved exactly.  A zero-count bottom row is
    folded into the lowest surviving group.
    """
    ranked = list(t.threshold_groups)
    bottom = t.bottom_row
    if all(g.count == 0 for g in ranked):
        raise TabulationError("all threshold groups have zero count; nothing to merge into")

    segments: list[list[IncomeGroup]] = []
    pending: list[IncomeGroup] = []
    for g in ranked:
        pending.append(g)
        if g.count > 0:
            segments.append(pending)
            pending = []
    if pending:
        segments[-1].extend(pending)

    merged = [
        IncomeGroup(seg[-1].lower_threshold, sum(g.count for g in seg), sum(g.total for g in seg))
        for seg in segments
    ]
    if bottom is not None:
        if bottom.count == 0:
            low = merged[-1]
            merged[-1] = replace(low, total=low.total + bottom.total)
        else:
            merged.append(bottom)
    return replace(t, groups=tuple(merged))


def merge_to_common_thresholds(a: Tabulation, b: Tabulation) -> tuple[Tabulation, Tabulation]:
    """Re-bin both tabulations onto the intersection of their threshold sets.

    Counts and totals are summed within merged spans, so column sums are
    conserved exactly.  Threshold groups below the lowest common threshold
    fold into the bottom row.  Raises if fewer than two common thresholds
    remain.
    """
    thr_a = {g.lower_threshold for g in a.threshold_groups if g.lower_threshold is not None}
    thr_b = {g.lower_threshold for g in b.threshold_groups if g.lower_threshold is not None}
    if not thr_a or not thr_b:
        raise TabulationError("both tabulations need published thresholds to merge")
    common = sorted(thr_a & thr_b, reverse=True)
    if len(common) < 2:
        raise TabulationError(
            f"only {len(common)} common threshold(s); need at least 2 groups after merging"
        )
    return _rebin(a, common), _rebin(b, common)


def _rebin(t: Tabulation, thresholds_desc: list[int]) -> Tabulation:
    cuts = list(thresholds_desc)
    counts = [0] * len(cuts)
    totals = [0] * len(cuts)
    leftover_count = 0
    leftover_total = 0
    for g in t.threshold_groups:
        for i, cut in enumerate(cuts):
            if g.lower_threshold >= cut:
                counts[i] += g.count
                totals[i] += g.total
                break
        else:
            leftover_count += g.count
            leftover_total += g.total
    groups = [IncomeGroup(cut, c, s) for cut, c, s in zip(cuts, counts, totals)]
    bottom = t.bottom_row
    if bottom is not None or leftover_count or leftover_total:
        bc = (bottom.count if bottom else 0) + leftover_count
        bt = (bottom.total if bottom else 0) + leftover_total
        groups.append(IncomeGroup(None, bc, bt))
    return replace(t, groups=tuple(groups))


def derive_capital(agi: Tabulation, wages: Tabulation) -> Tabulation:
    """Capital income = total income minus wages, on the total-income ranking.

    Per group, the capital total is ``agi.total - wages.total`` while the
    count is reused from the total-income column (no separate capital counts
    are published; for top groups nearly every return has capital income).
    Both inputs must share year and group structure; merge first if needed.
    """
    if agi.year != wages.year:
        raise TabulationError(f"year mismatch: {agi.year} vs {wages.year}")
    if len(agi.groups) != len(wages.groups):
        raise TabulationError(
            f"group count mismatch: {len(agi.groups)} vs {len(wages.groups)}; "
            "merge to common thresholds first"
        )
    for ga, gw in zip(agi.groups, wages.groups):
        if ga.lower_threshold != gw.lower_threshold:
            raise TabulationError(
                f"threshold mismatch: {ga.lower_threshold} vs {gw.lower_threshold}"
            )
    groups = tuple(
        IncomeGroup(ga.lower_threshold, ga.count, ga.total - gw.total)
        for ga, gw in zip(agi.groups, wages.groups)
    )
    return Tabulation(
        year=agi.year,
        concept="capital",
        groups=groups,
        grand_total_count=agi.grand_total_count,
        grand_total_income=agi.grand_total_income - wages.grand_total_income,
        population_n=agi.population_n,
    )


def negative_total_thresholds(t: Tabulation) -> tuple[int | None, ...]:
    """Lower thresholds of ranked groups with negative totals (for reports)."""
    return tuple(g.lower_threshold for g in t.threshold_groups if g.total < 0)


def cumulate(t: Tabulation, drop_bottom: bool = True) -> CumulativeView:
    """Cumulative counts/incomes from the top.

    With ``drop_bottom`` set (the default, and what estimation uses), the
    unranked bottom row - the deficit row in total-income tables - is
    excluded.
    """
    groups = t.threshold_groups if drop_bottom else t.groups
    counts: list[int] = []
    totals: list[int] = []
    c = s = 0
    for g in groups:
        c += int(g.count)
        s += int(g.total)
        counts.append(c)
        totals.append(s)
    return CumulativeView(
        counts=tuple(counts),
        totals=tuple(totals),
        thresholds=tuple(g.lower_threshold for g in groups),
    )
