"""Pareto tail exponents of income distributions from tabulated tax summaries.

Tax authorities publish income distributions as grouped tabulations: per
income bracket, the number of returns and the total income.  This package
models those tabulations, estimates the power-law exponent of the upper
tail from them by minimum distance with efficient weighting (plus grouped
maximum likelihood, a bracket-slope estimator, and a share-ratio estimator
for comparison), estimates the potential-tax-unit population the fractiles
refer to, and verifies the whole chain with seeded Monte Carlo studies.
"""

__version__ = "0.1.0"

from paretotab.estimators import (
    EmpiricalMoments,
    EstimateResult,
    EstimationError,
    MomentSystem,
    ScanPoint,
    TwConfig,
    ap_estimate,
    asymptotic_se,
    build_moment_system,
    empirical_ratios,
    fp_estimate,
    ml_grouped,
    mu_segment,
    select_top_groups,
    sigma2_segment,
    sigma_cross,
    tail_scan,
    tw_estimate,
    tw_from_moments,
)
from paretotab.pareto import (
    ParetoTail,
    ShareCurve,
    implied_share,
    interpolate_share,
    share_curve_from_tabulation,
    share_ratio_exponent,
    tail_probability,
    top_share,
)
from paretotab.sampleframe import (
    DemographicSeries,
    JointShareFit,
    YearRecord,
    alt_units,
    fit_joint_share_regression,
    interpolate_intercensal,
    potential_units,
    read_demographics,
)
from paretotab.simulate import (
    McReport,
    RepRecord,
    SimConfig,
    inverse_cdf,
    mc_study,
    sample_pareto,
    tabulate_sample,
)
from paretotab.tabulation import (
    CumulativeView,
    IncomeGroup,
    Tabulation,
    TabulationError,
    TotalsReport,
    cumulate,
    derive_capital,
    merge_to_common_thresholds,
    merge_zero_count_groups,
    negative_total_thresholds,
    parse_tabulation,
    validate_totals,
    write_tabulation,
)

__all__ = [name for name in dir() if not name.startswith("_")]
