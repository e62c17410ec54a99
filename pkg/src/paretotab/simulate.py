"""Seeded synthetic-data generation and Monte Carlo calibration studies.

Draws i.i.d. samples from an exact Pareto distribution, tabulates them the
way tax authorities would (group counts and totals only), runs an estimator
end to end, and aggregates bias, dispersion, and confidence-interval
coverage across replications.  This is the independent oracle for estimator
correctness and standard-error calibration.

Replication streams come from the counter-based Philox generator keyed by
(seed, replication), so replications are order-independent and the whole
study is reproducible bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from paretotab.estimators import (
    EstimationError,
    TwConfig,
    ml_grouped,
    tw_estimate,
)
from paretotab.tabulation import IncomeGroup, Tabulation, TabulationError

#: Incomes are integerized at this many sub-units per currency unit, so
#: tabulated counts and totals conserve the sample mass exactly.
RESOLUTION = 10**6

# int64 headroom guard for integerized totals
_MAX_SAFE_TOTAL = float(2**62)


@dataclass(frozen=True)
class SimConfig:
    """One synthetic study: tail shape, sample size, grouping, replications.

    Exactly one of ``fractile_grid`` (count-based groups at the given top
    fractiles, the partial-sums-only setting) or ``threshold_grid``
    (value-based brackets, the known-thresholds setting) must be set.
    """

    alpha_true: float
    n_draws: int
    replications: int = 1
    seed: int = 3
    cutoff: float = 1.0
    fractile_grid: tuple[float, ...] | None = (0.001, 0.002, 0.004, 0.008, 0.016)
    threshold_grid: tuple[float, ...] | None = None

    def __post_init__(self):
        if not self.alpha_true > 1.0:
            raise ValueError(f"alpha_true must exceed 1, got {self.alpha_true}")
        if not self.cutoff > 0.0:
            raise ValueError(f"cutoff must be positive, got {self.cutoff}")
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        if (self.fractile_grid is None) == (self.threshold_grid is None):
            raise ValueError("set exactly one of fractile_grid or threshold_grid")
        groups = len(self.fractile_grid or self.threshold_grid)
        if self.n_draws < 10 * groups:
            raise ValueError(
                f"n_draws={self.n_draws} too small for {groups} groups (need >= 10x)"
            )
        if self.fractile_grid is not None:
            grid = self.fractile_grid
            if any(b <= a for a, b in zip(grid, grid[1:])) or not 0 < grid[0] or not grid[-1] < 1:
                raise ValueError("fractile_grid must be strictly increasing inside (0, 1)")


@dataclass(frozen=True)
class RepRecord:
    """Outcome of one replication (error set and estimates None on failure)."""

    replication: int
    alpha_hat: float | None
    se: float | None
    covered: bool | None
    error: str | None = None


@dataclass(frozen=True)
class McReport:
    """Aggregated Monte Carlo study results."""

    method: str
    alpha_true: float
    n_draws: int
    replications: int
    failures: int
    mean_alpha_hat: float
    sd_alpha_hat: float | None
    mean_asymptotic_se: float
    ci_coverage_95: float
    records: tuple[RepRecord, ...]

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "alpha_true": self.alpha_true,
            "n_draws": self.n_draws,
            "replications": self.replications,
            "failures": self.failures,
            "mean_alpha_hat": self.mean_alpha_hat,
            "sd_alpha_hat": self.sd_alpha_hat,
            "mean_asymptotic_se": self.mean_asymptotic_se,
            "ci_coverage_95": self.ci_coverage_95,
        }


def inverse_cdf(u, alpha: float, cutoff: float = 1.0):
    """Quantile transform y = c * (1-u)^(-1/alpha) for u in [0, 1)."""
    return cutoff * (1.0 - np.asarray(u, dtype=float)) ** (-1.0 / alpha)


def sample_pareto(cfg: SimConfig, replication: int) -> np.ndarray:
    """Deterministic i.i.d. Pareto draws for the (seed, replication) stream."""
    rng = np.random.Generator(
        np.random.Philox(np.random.SeedSequence((cfg.seed, replication)))
    )
    return inverse_cdf(rng.random(cfg.n_draws), cfg.alpha_true, cfg.cutoff)


def tabulate_sample(
    sample,
    fractile_grid: tuple[float, ...] | None = None,
    threshold_grid: tuple[float, ...] | None = None,
    year: int = 0,
    concept: str = "other",
) -> Tabulation:
    """Group a micro sample the way a published tabulation would.

    Incomes are integerized per observation at RESOLUTION sub-units, so the
    group counts sum to the sample size and the group totals sum to the
    integerized sample total exactly.  With a fractile grid the groups are
    the top slices by rank (thresholds recorded as each group's observed
    minimum) and the remainder becomes the unranked bottom row; with a
    threshold grid the groups are the given brackets and draws below the
    lowest threshold, if any, form the bottom row.
    """
    if (fractile_grid is None) == (threshold_grid is None):
        raise ValueError("set exactly one of fractile_grid or threshold_grid")
    values = np.asarray(sample, dtype=float)
    n = len(values)
    if n == 0:
        raise ValueError("empty sample")
    if float(values.max()) * RESOLUTION * n > _MAX_SAFE_TOTAL:
        raise ValueError("sample too large for exact integer totals at this resolution")
    ints = np.rint(values * RESOLUTION).astype(np.int64)
    grand_total = int(ints.sum())

    if fractile_grid is not None:
        boundaries = [int(round(p * n)) for p in fractile_grid]
        if boundaries[0] < 1 or any(b <= a for a, b in zip(boundaries, boundaries[1:])):
            raise ValueError(f"fractile grid maps to degenerate group counts {boundaries}")
        top_m = boundaries[-1]
        if top_m > n:
            raise ValueError("fractile grid exceeds the sample size")
        # only the top slice needs ordering; the remainder is one row
        part = np.partition(ints, n - top_m)
        top = np.sort(part[n - top_m :])[::-1]
        groups = []
        prev = 0
        for n_k in boundaries:
            slice_vals = top[prev:n_k]
            groups.append(
                IncomeGroup(int(slice_vals[-1]), n_k - prev, int(slice_vals.sum()))
            )
            prev = n_k
        rest_count = n - top_m
        if rest_count:
            groups.append(IncomeGroup(None, rest_count, grand_total - int(top.sum())))
    else:
        cuts = sorted((int(round(t * RESOLUTION)) for t in threshold_grid), reverse=True)
        if any(b >= a for a, b in zip(cuts, cuts[1:])) or cuts[-1] <= 0:
            raise ValueError(f"threshold grid maps to degenerate cuts {cuts}")
        asc = np.sort(ints)
        idx = np.searchsorted(asc, np.array(cuts, dtype=np.int64), side="left")
        csum = np.concatenate([[0], np.cumsum(asc)])
        groups = []
        upper_count, upper_total = n, grand_total
        for cut, i in zip(cuts, idx):
            count = n - int(i) - (n - upper_count)
            total = int(csum[n] - csum[i]) - (grand_total - upper_total)
            groups.append(IncomeGroup(cut, count, total))
            upper_count, upper_total = int(i), int(csum[i])
        if upper_count:
            groups.append(IncomeGroup(None, upper_count, upper_total))

    return Tabulation(
        year=year,
        concept=concept,
        groups=tuple(groups),
        grand_total_count=n,
        grand_total_income=grand_total,
        population_n=n,
    )


def mc_study(cfg: SimConfig, method: str = "tw") -> McReport:
    """Run the full sample -> tabulate -> estimate loop and calibrate.

    Coverage counts the replications whose 95% interval (1.96 standard
    errors) contains the true exponent.  Per-replication failures are
    recorded, not raised, unless more than 10% of replications fail.
    """
    if method not in ("tw", "ml"):
        raise ValueError(f"method must be 'tw' or 'ml', got {method!r}")
    if method == "ml" and cfg.threshold_grid is None:
        raise ValueError("grouped likelihood needs a threshold_grid")

    records = []
    for rep in range(cfg.replications):
        try:
            tab = tabulate_sample(
                sample_pareto(cfg, rep),
                fractile_grid=cfg.fractile_grid,
                threshold_grid=cfg.threshold_grid,
            )
            if method == "tw":
                fraction = cfg.fractile_grid[-1] if cfg.fractile_grid else 1.0
                res = tw_estimate(tab, cfg.n_draws, TwConfig(top_fraction=fraction))
            else:
                ranked = tab.threshold_groups
                res = ml_grouped(
                    [g.lower_threshold for g in ranked],
                    [g.count for g in ranked],
                    L=len(ranked),
                )
            covered = abs(res.alpha_hat - cfg.alpha_true) <= 1.96 * res.se
            records.append(RepRecord(rep, res.alpha_hat, res.se, covered))
        except (EstimationError, TabulationError, ValueError) as exc:
            records.append(RepRecord(rep, None, None, None, error=str(exc)))

    failures = sum(1 for r in records if r.error is not None)
    if failures > 0.10 * cfg.replications:
        raise EstimationError(
            f"{failures}/{cfg.replications} replications failed; "
            f"first error: {next(r.error for r in records if r.error)}"
        )
    alphas = np.array([r.alpha_hat for r in records if r.error is None])
    ses = np.array([r.se for r in records if r.error is None])
    covers = [r.covered for r in records if r.error is None]
    return McReport(
        method=method,
        alpha_true=cfg.alpha_true,
        n_draws=cfg.n_draws,
        replications=cfg.replications,
        failures=failures,
        mean_alpha_hat=float(alphas.mean()),
        sd_alpha_hat=float(alphas.std(ddof=1)) if len(alphas) > 1 else None,
        mean_asymptotic_se=float(ses.mean()),
        ci_coverage_95=float(sum(covers) / len(covers)),
        records=tuple(records),
    )
