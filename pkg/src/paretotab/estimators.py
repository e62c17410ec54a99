"""Pareto-exponent estimators for tabulated income data.

The workhorse is a minimum distance estimator that needs only group counts
and group income totals: the expected income of the top fractile slice
(p, q) of a Pareto tail with tail index xi = 1/alpha is proportional to
mu(p, q) = (q^(1-xi) - p^(1-xi))/(1-xi), so the ratios of group incomes to a
reference group pin down alpha.  The estimator minimizes the weighted
distance between those theoretical ratios and their sample counterparts,
iterating the weighting matrix to the inverse of the ratios' asymptotic
covariance (which attains the efficiency bound), and reports standard
errors from that covariance.  Following the asymptotic theory, the very top
group enters only through fractile boundaries, never through its income.

Three comparison estimators are included: grouped maximum likelihood on
bracket counts (method "ml", needs thresholds), the bracket-slope estimator
around the top 0.5% tail fraction (method "fp"), and the two-fractile share
ratio estimator (method "ap", needs a share curve).  A threshold-sensitivity
scan reruns the minimum distance estimator at every admissible group depth.
"""

from __future__ import annotations

import math
import operator
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from paretotab.pareto import ShareCurve, interpolate_share, share_ratio_exponent
from paretotab.tabulation import CumulativeView, Tabulation, cumulate

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0

METHODS = ("tw", "ml", "fp", "ap")


class EstimationError(RuntimeError):
    """Estimation failed: degenerate inputs, no convergence, or boundary hit."""


@dataclass(frozen=True)
class TwConfig:
    """Settings for the minimum distance estimator.

    ``top_fraction`` caps the tail used for estimation (largest L such that
    the top L+1 groups lie within it); the search interval is the compact
    set over which alpha is minimized, and boundary hits are errors, not
    estimates.
    """

    top_fraction: float = 0.01
    alpha_init: float = 2.0
    alpha_lo: float = 1.05
    alpha_hi: float = 20.0
    iteration_tol: float = 1e-6
    max_iterations: int = 50
    objective_tol: float = 1e-10

    def __post_init__(self):
        if not 0.0 < self.top_fraction <= 1.0:
            raise ValueError(f"top_fraction must be in (0, 1], got {self.top_fraction}")
        if not 1.0 < self.alpha_lo < self.alpha_hi:
            raise ValueError(
                f"need 1 < alpha_lo < alpha_hi, got [{self.alpha_lo}, {self.alpha_hi}]"
            )
        for name in ("iteration_tol", "objective_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


@dataclass
class MomentSystem:
    """Theoretical moments of the top income groups at a candidate exponent.

    For fractiles p_1 < ... < p_{L+1}, ``mu[k]`` is the expected
    (normalized) income of the slice (p_k, p_{k+1}); ``r`` the first L-1
    ratios mu_k/mu_L; ``sigma`` the L x L asymptotic covariance of the slice
    incomes; ``h`` the delta-method Jacobian [I | -r]/mu_L mapping slices to
    ratios; and ``omega = h sigma h^T`` the ratios' covariance, symmetric
    positive definite.
    """

    fractiles: np.ndarray
    xi: float
    mu: np.ndarray
    r: np.ndarray
    sigma: np.ndarray
    h: np.ndarray
    omega: np.ndarray


@dataclass(frozen=True)
class EmpiricalMoments:
    """Sample ratios of group incomes to the reference (L+1)-th group.

    ``s[j]`` is the income of group j+2 over the income of group L+1, so it
    pairs positionally with the theoretical ratio ``r[j]`` built from the
    fractile slice (p_{j+1}, p_{j+2}).  The top group's income never enters.
    """

    s: np.ndarray
    L: int
    n: int | None = None


@dataclass(frozen=True)
class EstimateResult:
    """A point estimate with its diagnostics.

    ``objective_value`` is the minimized weighted distance for "tw", the
    maximized per-observation log likelihood for "ml", and None for the
    closed-form methods.  ``se`` is absent for "fp"/"ap".
    """

    method: str
    alpha_hat: float
    se: float | None
    groups_used: int
    iterations: int
    objective_value: float | None
    warnings: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "alpha_hat": self.alpha_hat,
            "se": self.se,
            "groups_used": self.groups_used,
            "iterations": self.iterations,
            "objective": self.objective_value,
            "warnings": list(self.warnings),
        }


@dataclass(frozen=True)
class ScanPoint:
    """One point of a threshold-sensitivity scan (None fields mark gaps)."""

    groups_used: int
    threshold: int | None
    tail_fraction: float
    alpha_hat: float | None
    se: float | None
    error: str | None = None


# ---------------------------------------------------------------------------
# moment kernel
# ---------------------------------------------------------------------------

def _expm1_ratio(x: float) -> float:
    # (e^x - 1)/x with the series taking over where cancellation would bite
    if abs(x) < 1e-8:
        return 1.0 + x / 2.0 + x * x / 6.0
    return math.expm1(x) / x


def _power_gap(p: float, q: float, beta: float) -> float:
    # (q^beta - p^beta)/beta, continuous through beta = 0 where it tends to
    # log(q/p); rewriting via (e^x - 1)/x removes the cancellation.
    t = math.log(q / p)
    return p**beta * t * _expm1_ratio(beta * t)


def _check_segment(p: float, q: float, xi: float) -> None:
    if not 0.0 < xi < 1.0:
        raise ValueError(f"tail index must be in (0, 1), got {xi}")
    if not 0.0 < p <= q <= 1.0:
        raise ValueError(f"need 0 < p <= q <= 1, got p={p}, q={q}")


def mu_segment(p: float, q: float, xi: float) -> float:
    """Expected normalized income of the fractile slice (p, q)."""
    _check_segment(p, q, xi)
    return (q ** (1.0 - xi) - p ** (1.0 - xi)) / (1.0 - xi)


def sigma2_segment(p: float, q: float, xi: float) -> float:
    """Asymptotic variance of the slice income; stable through xi = 1/2."""
    _check_segment(p, q, xi)
    if p == q:
        return 0.0
    one_m_xi = 1.0 - xi
    term1 = _power_gap(p, q, 1.0 - 2.0 * xi)
    term2 = p**one_m_xi * (q**-xi - p**-xi) / xi
    term3 = (
        2.0 * p**one_m_xi * q**one_m_xi - p ** (2.0 * one_m_xi) - q ** (2.0 * one_m_xi)
    ) / (2.0 * one_m_xi)
    return 2.0 * xi * xi / one_m_xi * (term1 + term2 + term3)


def sigma_cross(p_j: float, p_j1: float, p_k: float, p_k1: float, xi: float) -> float:
    """Asymptotic covariance of two disjoint slice incomes, (p_j, p_j1) above (p_k, p_k1)."""
    if not 0.0 < xi < 1.0:
        raise ValueError(f"tail index must be in (0, 1), got {xi}")
    if not 0.0 < p_j <= p_j1 <= p_k <= p_k1 <= 1.0:
        raise ValueError(
            f"need 0 < p_j <= p_j1 <= p_k <= p_k1 <= 1, got "
            f"({p_j}, {p_j1}, {p_k}, {p_k1})"
        )
    upper = (p_j1 ** (1.0 - xi) - p_j ** (1.0 - xi)) / (1.0 - xi)
    lower = (p_k1**-xi - p_k**-xi) / xi + (p_k1 ** (1.0 - xi) - p_k ** (1.0 - xi)) / (1.0 - xi)
    return -xi * xi * upper * lower


def _ratio_curve(alpha: float, fractiles: np.ndarray) -> np.ndarray:
    # r(alpha): the 1/(1-xi) factors cancel in the ratios
    gaps = np.diff(fractiles ** (1.0 - 1.0 / alpha))
    return gaps[:-1] / gaps[-1]


def build_moment_system(alpha: float, fractiles) -> MomentSystem:
    """Assemble mu, r, sigma, h, and omega at the candidate exponent."""
    p = np.asarray(fractiles, dtype=float)
    if p.ndim != 1 or len(p) < 3:
        raise ValueError("need at least 3 fractiles (2 groups beyond the reference)")
    if not (np.all(np.diff(p) > 0) and 0.0 < p[0] and p[-1] < 1.0):
        raise ValueError("fractiles must be strictly increasing inside (0, 1)")
    if not alpha > 1.0:
        raise ValueError(f"alpha must exceed 1, got {alpha}")
    xi = 1.0 / alpha
    L = len(p) - 1
    mu = np.array([mu_segment(p[k], p[k + 1], xi) for k in range(L)])
    r = mu[:-1] / mu[-1]
    sigma = np.empty((L, L))
    for j in range(L):
        sigma[j, j] = sigma2_segment(p[j], p[j + 1], xi)
        for k in range(j + 1, L):
            sigma[j, k] = sigma[k, j] = sigma_cross(p[j], p[j + 1], p[k], p[k + 1], xi)
    h = np.hstack([np.eye(L - 1), -r[:, None]]) / mu[-1]
    omega = h @ sigma @ h.T
    omega = 0.5 * (omega + omega.T)
    return MomentSystem(fractiles=p, xi=xi, mu=mu, r=r, sigma=sigma, h=h, omega=omega)


# ---------------------------------------------------------------------------
# shared numerics
# ---------------------------------------------------------------------------

def _minimize_scalar(f, lo: float, hi: float) -> float:
    """Deterministic scalar minimizer for a smooth unimodal objective.

    Golden-section search brackets the minimizer to 1e-4 of the interval,
    then bisection on the sign of a central-difference derivative refines to
    ~1e-11 relative, resolving quadratic objectives far below the configured
    objective tolerance.
    """
    a, b = lo, hi
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    width_tol = 1e-4 * (hi - lo)
    while b - a > width_tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
    h = 1e-6 * max(1.0, 0.5 * (a + b))
    for _ in range(200):
        m = 0.5 * (a + b)
        if f(m + h) - f(m - h) > 0.0:
            b = m
        else:
            a = m
        if b - a <= 1e-11 * max(1.0, m):
            break
    return 0.5 * (a + b)


def _check_interior(alpha: float, lo: float, hi: float) -> None:
    margin = 1e-6 * (hi - lo)
    if alpha - lo <= margin or hi - alpha <= margin:
        raise EstimationError(
            f"minimizer {alpha:.6f} sits at the search boundary [{lo}, {hi}]; "
            "the exponent may be at or below 1, or the tail model does not fit"
        )


def _spd_factor(omega: np.ndarray, warnings: list[str]):
    # Symmetric factorization with one diagonal-jitter retry.
    try:
        return cho_factor(omega, lower=True)
    except LinAlgError:
        jitter = 1e-12 * float(np.trace(omega)) / omega.shape[0]
        warnings.append(f"weighting matrix needed diagonal jitter {jitter:.3e}")
        try:
            return cho_factor(omega + jitter * np.eye(omega.shape[0]), lower=True)
        except LinAlgError as exc:
            raise EstimationError(
                "weighting matrix factorization failed even after a jitter retry"
            ) from exc


# ---------------------------------------------------------------------------
# minimum distance estimation (method "tw")
# ---------------------------------------------------------------------------

def empirical_ratios(cv: CumulativeView, L: int, n: int | None = None) -> EmpiricalMoments:
    """Sample income ratios s of groups 2..L against group L+1.

    Components are exact integer quotients converted once to float, so
    rescaling every total by a common factor leaves them bit-identical.
    """
    if L < 2:
        raise EstimationError(f"need L >= 2 groups beyond the reference, got L={L}")
    if len(cv) < L + 1:
        raise EstimationError(f"cumulative view has {len(cv)} groups, need {L + 1}")
    den = cv.totals[L] - cv.totals[L - 1]
    if den <= 0:
        raise EstimationError("reference group income is zero or negative")
    nums = [cv.totals[k] - cv.totals[k - 1] for k in range(1, L)]
    if any(num <= 0 for num in nums):
        raise EstimationError("nonpositive group income among the top groups")
    s = np.array([num / den for num in nums])
    return EmpiricalMoments(s=s, L=L, n=n)


def select_top_groups(cv: CumulativeView, n: int, fraction: float = 0.01) -> int:
    """Largest L whose top L+1 groups all lie within the top ``fraction``."""
    n = operator.index(n)
    counts = cv.counts
    if any(b <= a for a, b in zip(counts, counts[1:])):
        raise EstimationError("cumulative counts not strictly increasing; merge zero-count groups")
    if n < counts[-1]:
        raise EstimationError(f"population {n} is below the cumulative count {counts[-1]}")
    qualifying = sum(1 for c in counts if c / n <= fraction)
    if qualifying < 3:
        raise EstimationError(
            f"only {qualifying} group(s) inside the top fraction {fraction}; "
            "use a larger fraction"
        )
    return qualifying - 1


def tw_estimate(t: Tabulation, n: int, cfg: TwConfig | None = None) -> EstimateResult:
    """Minimum distance estimate of the tail exponent from a tabulation.

    Args:
        t: cleaned tabulation (zero-count groups merged).
        n: population of potential tax units; fixes the fractiles n_k/n.
        cfg: estimation settings; defaults to the top 1% with a two-step
            weighting iterated to convergence.

    The objective (r(alpha)-s)' W (r(alpha)-s) is minimized over the search
    interval, starting from W = omega(alpha_init)^-1 and re-solving with
    W = omega(alpha_hat)^-1 until alpha_hat moves less than iteration_tol.
    The standard error uses the efficient form at the final alpha_hat.
    """
    cfg = cfg or TwConfig()
    cv = cumulate(t, drop_bottom=True)
    L = select_top_groups(cv, n, cfg.top_fraction)
    return _tw_from_cv(cv, n, L, cfg)


def _tw_from_cv(cv: CumulativeView, n: int, L: int, cfg: TwConfig) -> EstimateResult:
    n = operator.index(n)
    fractiles = np.array([c / n for c in cv.counts[: L + 1]])
    if not fractiles[-1] < 1.0:
        raise EstimationError("top fractiles reach the whole population; tail model vacuous")
    s = empirical_ratios(cv, L, n).s
    return tw_from_moments(s, fractiles, n, cfg)


def tw_from_moments(s, fractiles, n: int | None = None, cfg: TwConfig | None = None) -> EstimateResult:
    """Run the weighting iteration on given sample ratios and fractiles.

    The entry point for synthetic or pre-aggregated moments: ``s`` must pair
    positionally with the theoretical ratios built from ``fractiles``.  The
    standard error needs the population size and is None when ``n`` is
    omitted.
    """
    cfg = cfg or TwConfig()
    s = np.asarray(s, dtype=float)
    fractiles = np.asarray(fractiles, dtype=float)
    if len(s) != len(fractiles) - 2:
        raise EstimationError(
            f"{len(s)} ratios do not pair with {len(fractiles)} fractiles "
            "(need one ratio per group beyond the top, minus the reference)"
        )

    warnings: list[str] = []
    weight_alpha = cfg.alpha_init
    alpha = None
    iterations = 0
    objective_value = math.inf
    for _ in range(cfg.max_iterations):
        omega = build_moment_system(weight_alpha, fractiles).omega
        factor = _spd_factor(omega, warnings)

        def objective(a: float) -> float:
            d = _ratio_curve(a, fractiles) - s
            return float(d @ cho_solve(factor, d))

        new = _minimize_scalar(objective, cfg.alpha_lo, cfg.alpha_hi)
        iterations += 1
        _check_interior(new, cfg.alpha_lo, cfg.alpha_hi)
        objective_value = objective(new)
        if alpha is not None and abs(new - alpha) < cfg.iteration_tol:
            alpha = new
            break
        alpha = new
        weight_alpha = new
    else:
        raise EstimationError(
            f"weighting iteration did not converge in {cfg.max_iterations} steps"
        )

    se = asymptotic_se(alpha, fractiles, n) if n is not None else None
    L = len(fractiles) - 1
    return EstimateResult(
        method="tw",
        alpha_hat=alpha,
        se=se,
        groups_used=L,
        iterations=iterations,
        objective_value=objective_value,
        warnings=tuple(warnings),
    )


def asymptotic_se(alpha_hat: float, fractiles, n: int) -> float:
    """Standard error sqrt((R' omega^-1 R)^-1 / n) at the estimated exponent.

    R is the derivative of the theoretical ratios in alpha, taken by central
    differences with step 1e-6 * max(1, alpha_hat); omega is evaluated at
    alpha_hat (the efficient-weighting form of the asymptotic variance).
    """
    p = np.asarray(fractiles, dtype=float)
    omega = build_moment_system(alpha_hat, p).omega
    h = 1e-6 * max(1.0, alpha_hat)
    grad = (_ratio_curve(alpha_hat + h, p) - _ratio_curve(alpha_hat - h, p)) / (2.0 * h)
    warnings: list[str] = []
    factor = _spd_factor(omega, warnings)
    quad = float(grad @ cho_solve(factor, grad))
    if not quad > 0.0 or not math.isfinite(quad):
        raise EstimationError("singular curvature R' omega^-1 R; no standard error")
    return math.sqrt(1.0 / (quad * n))


def tail_scan(t: Tabulation, n: int, cfg: TwConfig | None = None) -> tuple[ScanPoint, ...]:
    """Estimate at every admissible group depth L = 2 .. K-1.

    Each point is keyed by the lower threshold of the reference group L+1 so
    the scan reads as "estimate as a function of the tail cutoff"; failures
    (boundary hits, degenerate ratios) are recorded as gaps, not raised.
    """
    cfg = cfg or TwConfig()
    cv = cumulate(t, drop_bottom=True)
    n = operator.index(n)
    points = []
    for L in range(2, len(cv)):
        threshold = cv.thresholds[L]
        tail_fraction = cv.counts[L] / n
        try:
            res = _tw_from_cv(cv, n, L, cfg)
            points.append(
                ScanPoint(L, threshold, tail_fraction, res.alpha_hat, res.se, None)
            )
        except (EstimationError, ValueError) as exc:
            points.append(ScanPoint(L, threshold, tail_fraction, None, None, str(exc)))
    return tuple(points)


# ---------------------------------------------------------------------------
# grouped maximum likelihood (method "ml")
# ---------------------------------------------------------------------------

def ml_grouped(
    thresholds,
    counts,
    L: int,
    alpha_lo: float = 1.05,
    alpha_hi: float = 20.0,
) -> EstimateResult:
    """Maximum likelihood on bracket counts with known thresholds.

    Args:
        thresholds: strictly decreasing lower bracket bounds t_1 > ... >= t_L
            (an implicit t_0 = +infinity caps the top group).
        counts: returns per bracket, aligned with thresholds; the groups
            1..L used for estimation must all be nonzero.
        L: number of top groups used; the tail model is assumed valid at and
            above t_L.

    Conditional on income >= t_L the bracket counts are multinomial with
    cell probabilities (t_k/t_L)^-alpha - (t_{k-1}/t_L)^-alpha, so the
    normalized log likelihood is maximized over the search interval.  The
    standard error comes from the observed information (numerical second
    derivative at step 1e-5 * alpha_hat, scaled by the tail sample size).
    """
    t = np.asarray(thresholds, dtype=float)
    m = np.asarray(counts, dtype=float)
    if L < 2:
        raise EstimationError(f"need at least 2 groups for grouped likelihood, got L={L}")
    if len(t) < L or len(m) < L:
        raise EstimationError(f"need {L} thresholds and counts, got {len(t)} and {len(m)}")
    if np.any(t[:L] <= 0) or np.any(np.diff(t[:L]) >= 0):
        raise EstimationError("thresholds must be positive and strictly decreasing")
    if np.any(m[:L] <= 0):
        raise EstimationError("zero-count group among the top L; merge groups first")

    # counts may be non-integer weights (e.g. exact cell probabilities)
    tail_n = float(m[:L].sum())
    q = m[:L] / tail_n
    rel = t[:L] / t[L - 1]

    def loglik(alpha: float) -> float:
        upper_tail = rel**-alpha
        cells = upper_tail - np.concatenate([[0.0], upper_tail[:-1]])
        if np.any(cells <= 0.0):
            raise EstimationError(f"degenerate cell probability at alpha={alpha}")
        value = float(q @ np.log(cells))
        if not math.isfinite(value):
            raise EstimationError(f"non-finite likelihood at alpha={alpha}")
        return value

    alpha = _minimize_scalar(lambda a: -loglik(a), alpha_lo, alpha_hi)
    _check_interior(alpha, alpha_lo, alpha_hi)

    h = 1e-5 * alpha
    second = (loglik(alpha + h) - 2.0 * loglik(alpha) + loglik(alpha - h)) / (h * h)
    information = -tail_n * second
    if not information > 0.0:
        raise EstimationError("observed information not positive; no standard error")
    return EstimateResult(
        method="ml",
        alpha_hat=alpha,
        se=1.0 / math.sqrt(information),
        groups_used=L,
        iterations=1,
        objective_value=loglik(alpha),
    )


# ---------------------------------------------------------------------------
# closed-form comparison estimators (methods "fp" and "ap")
# ---------------------------------------------------------------------------

def fp_estimate(cv: CumulativeView, n: int, bracket_fraction: float = 0.005) -> float:
    """Bracket-slope estimate around the given tail fraction (default 0.5%).

    Picks the pair of adjacent thresholds y_1 < y_2 whose tail fractions
    enclose ``bracket_fraction`` and returns
    log[(1-F(y_1))/(1-F(y_2))] / log(y_2/y_1) with 1-F(y) read off the
    cumulative counts.  Exact whenever the counts follow the tail law.
    """
    n = operator.index(n)
    idx = None
    for k, count in enumerate(cv.counts):
        if count / n >= bracket_fraction:
            idx = k
            break
    if idx is None:
        raise EstimationError(
            f"no threshold reaches the tail fraction {bracket_fraction}; cannot bracket"
        )
    if idx == 0:
        raise EstimationError(
            f"even the highest group exceeds the tail fraction {bracket_fraction}; "
            "cannot bracket"
        )
    y1, y2 = cv.thresholds[idx], cv.thresholds[idx - 1]
    if y1 is None or y2 is None:
        raise EstimationError("bracketing thresholds unavailable in this tabulation")
    return math.log(cv.counts[idx] / cv.counts[idx - 1]) / math.log(y2 / y1)


def ap_estimate(curve: ShareCurve, p: float = 0.001, q: float = 0.01) -> float:
    """Two-fractile share-ratio estimate (1 - log[S(q)/S(p)]/log(q/p))^-1.

    Shares at p and q are spline-interpolated from the curve; out-of-range
    fractiles raise rather than extrapolate.
    """
    if not p < q:
        raise ValueError(f"need p < q, got p={p}, q={q}")
    share_p = interpolate_share(curve, p)
    share_q = interpolate_share(curve, q)
    try:
        return share_ratio_exponent(share_p, share_q, p, q)
    except ValueError as exc:
        raise EstimationError(str(exc)) from exc
