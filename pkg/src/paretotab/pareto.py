"""Closed-form Pareto tail mathematics.

Under a Pareto upper tail with exponent alpha > 1, the share of all income
going to the richest fraction p is p^(1-1/alpha); log share is linear in log
fractile with slope 1-1/alpha.  This module provides that law, conditional
tail probabilities, conversion of a share at one fractile into the implied
share at another, and log-log spline interpolation of empirical share
curves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from scipy.interpolate import CubicSpline

from paretotab.tabulation import Tabulation, cumulate


@dataclass(frozen=True)
class ParetoTail:
    """Pareto tail beyond a positive cutoff: Pr(Y > y | Y >= c) = (y/c)^-alpha."""

    alpha: float
    cutoff: float = 1.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not self.cutoff > 0:
            raise ValueError(f"cutoff must be positive, got {self.cutoff}")


@dataclass(frozen=True)
class ShareCurve:
    """Empirical top-share curve: strictly increasing (fractile, share) pairs."""

    fractiles: tuple[float, ...]
    shares: tuple[float, ...]

    def __post_init__(self):
        if len(self.fractiles) != len(self.shares):
            raise ValueError("fractiles and shares differ in length")
        if not self.fractiles:
            raise ValueError("empty share curve")
        for p, s in zip(self.fractiles, self.shares):
            if not 0.0 < p <= 1.0:
                raise ValueError(f"fractile {p} outside (0, 1]")
            if not 0.0 < s <= 1.0:
                raise ValueError(f"share {s} outside (0, 1]")
        if any(b <= a for a, b in zip(self.fractiles, self.fractiles[1:])):
            raise ValueError("fractiles must be strictly increasing")
        if any(b <= a for a, b in zip(self.shares, self.shares[1:])):
            raise ValueError("shares must be strictly increasing")


def tail_probability(tail: ParetoTail, y: float) -> float:
    """Conditional probability of exceeding y, for y at or above the cutoff."""
    if y < tail.cutoff:
        raise ValueError(f"y={y} is below the tail cutoff {tail.cutoff}")
    return (y / tail.cutoff) ** (-tail.alpha)


def top_share(alpha: float, p: float) -> float:
    """Income share of the richest fraction p: p^(1-1/alpha), alpha > 1."""
    if not alpha > 1.0:
        raise ValueError(f"alpha must exceed 1 (mean diverges otherwise), got {alpha}")
    if not 0.0 < p <= 1.0:
        raise ValueError(f"fractile {p} outside (0, 1]")
    return p ** (1.0 - 1.0 / alpha)


def implied_share(share_q: float, q: float, p: float, alpha: float) -> float:
    """Convert the top-q share into the implied top-p share, p <= q.

    Under a Pareto tail, S(p) = (p/q)^(1-1/alpha) * S(q); this is the
    construction that extrapolates, say, a top-0.1% share from a published
    top-1% share.
    """
    if not alpha > 1.0:
        raise ValueError(f"alpha must exceed 1, got {alpha}")
    if not 0.0 < p <= q <= 1.0:
        raise ValueError(f"need 0 < p <= q <= 1, got p={p}, q={q}")
    return (p / q) ** (1.0 - 1.0 / alpha) * share_q


def interpolate_share(curve: ShareCurve, p: float) -> float:
    """Evaluate the curve at fractile p via a natural cubic spline in log-log.

    Exact at knots; refuses to extrapolate outside the observed fractile
    range; requires at least three knots.
    """
    if len(curve.fractiles) < 3:
        raise ValueError(f"need at least 3 knots to interpolate, have {len(curve.fractiles)}")
    if not curve.fractiles[0] <= p <= curve.fractiles[-1]:
        raise ValueError(
            f"fractile {p} outside the observed range "
            f"[{curve.fractiles[0]}, {curve.fractiles[-1]}]; no extrapolation"
        )
    idx = _bisect(curve.fractiles, p)
    if curve.fractiles[idx] == p:
        return curve.shares[idx]
    spline = CubicSpline(
        [math.log(x) for x in curve.fractiles],
        [math.log(s) for s in curve.shares],
        bc_type="natural",
    )
    return math.exp(float(spline(math.log(p))))


def _bisect(values: tuple[float, ...], x: float) -> int:
    lo, hi = 0, len(values) - 1
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if values[mid] <= x:
            lo = mid
        else:
            hi = mid - 1
    return lo


def share_ratio_exponent(share_p: float, share_q: float, p: float, q: float) -> float:
    """Exponent implied by the shares at two fractiles p < q.

    Inverts S(p)/S(q) = (p/q)^(1-1/alpha).  Rejects configurations outside
    the Pareto-with-finite-mean regime: share_q <= share_p implies an
    exponent at or below 1, and share_q >= share_p*(q/p) leaves the exponent
    undefined (share growing at least proportionally with the fractile).
    """
    if not 0.0 < p < q <= 1.0:
        raise ValueError(f"need 0 < p < q <= 1, got p={p}, q={q}")
    if share_q <= share_p:
        raise ValueError(
            f"share at q={q} does not exceed share at p={p}; implied exponent <= 1"
        )
    ratio = math.log(share_q / share_p) / math.log(q / p)
    if ratio >= 1.0:
        raise ValueError(
            "share grows at least proportionally with the fractile; exponent undefined"
        )
    return 1.0 / (1.0 - ratio)


def share_curve_from_tabulation(t: Tabulation, population: int) -> ShareCurve:
    """Top-share curve of a tabulation against the potential population.

    Points are (n_k / population, S_k / positive-income total) at each group
    boundary, the denominator being the income summed over ranked groups
    only (the unranked deficit row is excluded, which adds its magnitude
    back relative to the published net grand total).
    """
    cv = cumulate(t, drop_bottom=True)
    if population < cv.counts[-1]:
        raise ValueError(
            f"population {population} is below the cumulative count {cv.counts[-1]}"
        )
    denominator = cv.totals[-1]
    if denominator <= 0:
        raise ValueError("nonpositive total income; cannot form shares")
    prev = 0
    for s_k in cv.totals:
        if s_k - prev <= 0:
            raise ValueError(
                "nonpositive group income encountered; merge or trim groups before "
                "building a share curve"
            )
        prev = s_k
    fractiles = tuple(n_k / population for n_k in cv.counts)
    shares = tuple(s_k / denominator for s_k in cv.totals)
    return ShareCurve(fractiles=fractiles, shares=shares)
