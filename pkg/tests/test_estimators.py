"""Moment kernel, minimum distance estimation, and comparison estimators."""

import math

import numpy as np
import pytest

from conftest import make_tabulation
from paretotab.estimators import (
    EstimationError,
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
from paretotab.pareto import ShareCurve, top_share
from paretotab.simulate import SimConfig, sample_pareto, tabulate_sample
from paretotab.tabulation import Tabulation, cumulate

GEOMETRIC_5 = np.array([0.001, 0.002, 0.004, 0.008, 0.016])


def geometric_fractiles(L, start=0.001):
    return np.array([start * 2**k for k in range(L + 1)])


class TestMomentKernel:
    def test_mu_values(self):
        assert mu_segment(0.01, 0.04, 0.5) == pytest.approx(0.2, rel=1e-12)
        assert mu_segment(0.3, 0.3, 0.25) == 0.0
        assert mu_segment(0.001, 0.01, 1 / 3) == pytest.approx(0.0546239, abs=1e-7)

    def test_sigma2_log_branch_at_half(self):
        expected = math.log(4.0) + 2.0 * (math.sqrt(0.25) - 1.0) - 0.01
        assert sigma2_segment(0.01, 0.04, 0.5) == pytest.approx(expected, rel=1e-12)
        assert sigma2_segment(0.01, 0.04, 0.5) == pytest.approx(0.376294, abs=1e-6)

    def test_sigma2_degenerate_segment(self):
        assert sigma2_segment(0.2, 0.2, 0.4) == 0.0

    def test_sigma2_formula_level_q_one(self):
        # algebraic check with q = 1 allowed at the kernel level
        assert sigma2_segment(0.25, 1.0, 0.25) == pytest.approx(0.0226032, abs=1e-6)

    def test_sigma2_continuous_through_half(self):
        mid = sigma2_segment(0.01, 0.09, 0.5)
        for eps in (1e-9, -1e-9):
            assert sigma2_segment(0.01, 0.09, 0.5 + eps) == pytest.approx(mid, rel=1e-6)

    def test_sigma_cross_value(self):
        assert sigma_cross(0.01, 0.04, 0.04, 0.09, 0.5) == pytest.approx(
            0.1566667, abs=1e-6
        )

    def test_sigma_cross_empty_block(self):
        assert sigma_cross(0.04, 0.04, 0.04, 0.09, 0.5) == 0.0

    def test_domain_errors(self):
        with pytest.raises(ValueError, match="tail index"):
            mu_segment(0.01, 0.04, 1.2)
        with pytest.raises(ValueError, match="p <= q"):
            mu_segment(0.04, 0.01, 0.5)
        with pytest.raises(ValueError, match="tail index"):
            sigma2_segment(0.01, 0.04, 0.0)
        with pytest.raises(ValueError, match="p_j"):
            sigma_cross(0.04, 0.09, 0.01, 0.02, 0.5)

    def test_covariance_against_simulation(self):
        # independent oracle: exact top-order-statistic sampling (smallest-m
        # uniforms via the Beta(m, n-m+1) bound, the rest scaled below it),
        # then partial sums of the transformed draws; the kernels must match
        # n * cov of the normalized group incomes
        rng = np.random.default_rng(915273)
        n, reps, m = 20_000, 60_000, 1_800
        xi, alpha = 0.5, 2.0
        boundaries = np.array([200, 800, 1_800])
        sums = np.zeros((reps, 3))
        chunk = 5_000
        for start in range(0, reps, chunk):
            k = min(chunk, reps - start)
            bound = rng.beta(m, n - m + 1, size=(k, 1))
            uniforms = np.sort(rng.random((k, m - 1)), axis=1) * bound
            u = np.hstack([uniforms, bound])
            y = u**-xi
            csum = np.cumsum(y, axis=1)
            sums[start : start + k] = csum[:, boundaries - 1]
        groups = np.diff(sums, axis=1) / n
        emp = n * np.cov(groups.T)
        assert emp[0, 0] == pytest.approx(sigma2_segment(0.01, 0.04, xi), rel=0.05)
        assert emp[1, 1] == pytest.approx(sigma2_segment(0.04, 0.09, xi), rel=0.05)
        assert emp[0, 1] == pytest.approx(sigma_cross(0.01, 0.04, 0.04, 0.09, xi), rel=0.05)
        means = groups.mean(axis=0)
        assert means[0] == pytest.approx(mu_segment(0.01, 0.04, xi), rel=0.01)
        assert means[1] == pytest.approx(mu_segment(0.04, 0.09, xi), rel=0.01)


class TestMomentSystem:
    def test_geometric_ratios(self):
        system = build_moment_system(2.0, GEOMETRIC_5)
        expected = [2 ** ((k - 4) / 2) for k in (1, 2, 3)]
        assert np.allclose(system.r, expected, atol=1e-6)

    def test_jacobian_annihilates_mu(self):
        for alpha in (1.3, 2.0, 4.0):
            system = build_moment_system(alpha, GEOMETRIC_5)
            assert system.h.shape == (3, 4)
            assert np.allclose(system.h @ system.mu, 0.0, atol=1e-12)

    def test_omega_positive_definite_sweep(self):
        for alpha in (1.1, 1.5, 2.0, 3.0, 5.0):
            for L in range(2, 11):
                omega = build_moment_system(alpha, geometric_fractiles(L, 1e-4)).omega
                assert np.linalg.eigvalsh(omega).min() > 0.0, (alpha, L)

    def test_too_few_fractiles_rejected(self):
        with pytest.raises(ValueError, match="at least 3 fractiles"):
            build_moment_system(2.0, [0.01, 0.02])

    def test_ratio_components_increase_in_k_and_move_with_alpha(self):
        fr = geometric_fractiles(6)
        for alpha in (1.2, 1.7, 2.5, 4.0, 8.0):
            r = build_moment_system(alpha, fr).r
            assert np.all(np.diff(r) > 0)
        alphas = np.linspace(1.05, 12.0, 30)
        curves = np.array([build_moment_system(a, fr).r for a in alphas])
        signs = np.sign(np.diff(curves, axis=0))
        assert np.all(signs == signs[0:1, :]), "each ratio must be monotone in alpha"


class TestEmpiricalRatios:
    def test_bundled_agi_ratios(self, agi2019):
        cv = cumulate(agi2019)
        s = empirical_ratios(cv, 5).s
        reference = 781_920_814
        assert s == pytest.approx(
            [
                237_781_553 / reference,
                425_088_995 / reference,
                176_961_208 / reference,
                305_561_848 / reference,
            ],
            rel=1e-15,
        )
        assert s == pytest.approx([0.30411, 0.54365, 0.22632, 0.39078], abs=2e-5)

    def test_equal_incomes_give_ones(self):
        t = make_tabulation([(2**k, 1, 10) for k in reversed(range(6))])
        s = empirical_ratios(cumulate(t), 5).s
        assert np.allclose(s, 1.0)

    def test_minimal_case(self):
        t = make_tabulation([(100, 1, 30), (50, 1, 40), (10, 1, 50)])
        moments = empirical_ratios(cumulate(t), 2)
        assert moments.s == pytest.approx([40 / 50])
        assert moments.L == 2

    def test_zero_reference_income_rejected(self):
        t = make_tabulation([(100, 1, 30), (50, 1, 40), (10, 1, 0)])
        with pytest.raises(EstimationError, match="reference group"):
            empirical_ratios(cumulate(t), 2)


class TestSelectTopGroups:
    def test_full_fraction_uses_all_groups(self, agi2019, population2019):
        cv = cumulate(agi2019)
        assert select_top_groups(cv, population2019, 1.0) == len(cv) - 1 == 17

    def test_bundled_top_percent(self, agi2019, population2019):
        # with the bundled sample frame (n = 188,291,000), the reference
        # group is the $500k bracket: n_6 = 1,718,771 <= 1% of n < n_7
        cv = cumulate(agi2019)
        assert select_top_groups(cv, population2019, 0.01) == 5

    def test_too_few_groups_error(self):
        t = make_tabulation([(100, 500, 30), (50, 600, 40), (10, 700, 50)])
        with pytest.raises(EstimationError, match="larger fraction"):
            select_top_groups(cumulate(t), 2000, 0.01)

    def test_non_increasing_counts_rejected(self):
        t = make_tabulation([(100, 5, 30), (50, 0, 40), (10, 7, 50)])
        with pytest.raises(EstimationError, match="merge"):
            select_top_groups(cumulate(t), 1000, 1.0)


class TestTwEstimate:
    def test_exact_moment_recovery_spot(self):
        fr = geometric_fractiles(5)
        for alpha0 in (1.2, 1.7, 3.0):
            r = build_moment_system(alpha0, fr).r
            res = tw_from_moments(r, fr)
            assert res.alpha_hat == pytest.approx(alpha0, abs=1e-6)
            assert res.objective_value < 1e-16
            assert res.iterations >= 2

    def test_bundled_capital_band(self, capital2019, population2019):
        res = tw_estimate(capital2019, population2019)
        assert 1.05 <= res.alpha_hat <= 1.35
        assert res.groups_used == 5
        assert res.se is not None and res.se < 0.01

    def test_bundled_agi_band(self, agi2019, population2019):
        res = tw_estimate(agi2019, population2019)
        assert 1.35 <= res.alpha_hat <= 1.70

    def test_bundled_wages_heavier_exponent(self, wages2019, population2019):
        # wage tails are thinner than capital tails: exponent near 2
        res = tw_estimate(wages2019, population2019)
        assert 1.8 <= res.alpha_hat <= 2.6

    def test_boundary_hit_is_error(self):
        fr = geometric_fractiles(4)
        light_tail = np.array([0.01, 0.1, 0.45])  # steeper decay than alpha=20
        with pytest.raises(EstimationError, match="boundary"):
            tw_from_moments(light_tail, fr)

    def test_non_convergence_reported(self, agi2019, population2019):
        with pytest.raises(EstimationError, match="converge"):
            tw_estimate(agi2019, population2019, TwConfig(max_iterations=1))

    def test_ratio_length_checked(self):
        with pytest.raises(EstimationError, match="pair"):
            tw_from_moments([0.5, 0.7], geometric_fractiles(2))

    def test_scale_invariance_bit_identical(self, capital2019, population2019):
        scaled = Tabulation(
            year=capital2019.year,
            concept=capital2019.concept,
            groups=tuple(
                type(g)(g.lower_threshold, g.count, g.total * 1000)
                for g in capital2019.groups
            ),
            grand_total_count=capital2019.grand_total_count,
            grand_total_income=capital2019.grand_total_income * 1000,
        )
        a = tw_estimate(capital2019, population2019)
        b = tw_estimate(scaled, population2019)
        assert a.alpha_hat == b.alpha_hat  # bitwise: s is ratio-valued
        assert a.se == b.se


class TestAsymptoticSe:
    def test_magnitude_at_1e8_top_percent(self):
        fr = np.array([0.000625 * 2**k for k in range(5)])  # top 1% grid
        se = asymptotic_se(1.5, fr, 10**8)
        assert 2e-4 <= se <= 5e-3

    def test_root_n_scaling(self):
        fr = geometric_fractiles(4)
        se1 = asymptotic_se(2.0, fr, 10**6)
        se2 = asymptotic_se(2.0, fr, 2 * 10**6)
        assert se1 / se2 == pytest.approx(math.sqrt(2.0), rel=1e-12)

    def test_efficiency_bound_spot(self):
        fr = geometric_fractiles(4)
        system = build_moment_system(1.5, fr)
        h = 1e-6
        grad = (
            build_moment_system(1.5 + h, fr).r - build_moment_system(1.5 - h, fr).r
        ) / (2 * h)
        v_eff = 1.0 / (grad @ np.linalg.solve(system.omega, grad))
        rng = np.random.default_rng(4)
        for _ in range(20):
            b = rng.normal(size=(4, 4))
            w = b @ b.T + 1e-6 * np.eye(4)
            w = w[:3, :3]
            denom = grad @ w @ grad
            sandwich = (grad @ w @ system.omega @ w @ grad) / denom**2
            assert sandwich - v_eff >= -1e-10


class TestMlGrouped:
    def test_two_group_analytic(self):
        res = ml_grouped([2.0, 1.0], [25, 75], L=2)
        assert res.alpha_hat == pytest.approx(2.0, abs=1e-6)
        assert res.se is not None and res.se > 0

    @pytest.mark.parametrize("alpha0", [1.3, 2.0, 4.5])
    def test_exact_probability_recovery(self, alpha0):
        t = np.array([16.0, 8.0, 4.0, 2.0, 1.0])
        upper = (t / t[-1]) ** -alpha0
        probs = upper - np.concatenate([[0.0], upper[:-1]])
        res = ml_grouped(t, probs * 1e7, L=5)
        assert res.alpha_hat == pytest.approx(alpha0, abs=1e-8)

    def test_monte_carlo_within_three_se(self):
        cfg = SimConfig(
            alpha_true=2.5, n_draws=10**6, seed=99,
            fractile_grid=None, threshold_grid=(1.0, 2.0, 4.0, 8.0),
        )
        tab = tabulate_sample(sample_pareto(cfg, 0), threshold_grid=cfg.threshold_grid)
        ranked = tab.threshold_groups
        res = ml_grouped(
            [g.lower_threshold for g in ranked], [g.count for g in ranked], L=len(ranked)
        )
        assert abs(res.alpha_hat - 2.5) <= 3.0 * res.se

    def test_threshold_scale_invariance(self):
        res1 = ml_grouped([8.0, 4.0, 2.0, 1.0], [5, 25, 120, 600], L=4)
        res2 = ml_grouped([8000.0, 4000.0, 2000.0, 1000.0], [5, 25, 120, 600], L=4)
        assert res1.alpha_hat == pytest.approx(res2.alpha_hat, abs=1e-10)

    def test_loglik_is_unimodal(self):
        # grid bracketing: differences of the profile change sign exactly once
        t = np.array([8.0, 4.0, 2.0, 1.0])
        counts = np.array([30, 140, 700, 3000])
        tail_n = counts.sum()
        rel = t / t[-1]

        def loglik(alpha):
            upper = rel**-alpha
            cells = upper - np.concatenate([[0.0], upper[:-1]])
            return float((counts / tail_n) @ np.log(cells))

        grid = np.linspace(1.05, 8.0, 300)
        values = np.array([loglik(a) for a in grid])
        rises = np.diff(values) > 0
        switches = np.count_nonzero(np.diff(rises.astype(int)))
        assert switches == 1
        interior = grid[np.argmax(values)]
        res = ml_grouped(t, counts, L=4)
        assert res.alpha_hat == pytest.approx(interior, abs=0.05)

    def test_degenerate_inputs_rejected(self):
        with pytest.raises(EstimationError, match="at least 2"):
            ml_grouped([2.0], [10], L=1)
        with pytest.raises(EstimationError, match="zero-count"):
            ml_grouped([4.0, 2.0, 1.0], [5, 0, 10], L=3)
        with pytest.raises(EstimationError, match="strictly decreasing"):
            ml_grouped([2.0, 2.0, 1.0], [5, 5, 10], L=3)


class TestFpEstimate:
    def test_doubling_bracket(self):
        # tails exactly Pareto(2): counts quarter when thresholds double
        t = make_tabulation([(200, 100, 900), (100, 300, 900)])
        alpha = fp_estimate(cumulate(t), 30_000)
        assert alpha == pytest.approx(2.0, rel=1e-12)

    def test_exact_for_any_alpha(self):
        # alpha = 1.2 exactly: count ratio 64 across a 32x threshold gap
        t = make_tabulation([(3200, 100, 900), (100, 6_300, 900)])
        alpha = fp_estimate(cumulate(t), 1_000_000)
        assert alpha == pytest.approx(1.2, rel=1e-12)

    def test_bundled_2019_bracket(self, agi2019, population2019):
        # the 0.5% tail fraction falls between the $1M and $500k brackets
        alpha = fp_estimate(cumulate(agi2019), population2019)
        expected = math.log(1_718_771 / 556_400) / math.log(2.0)
        assert alpha == pytest.approx(expected, rel=1e-12)
        assert 1.4 <= alpha <= 1.9

    def test_no_straddle_errors(self):
        t = make_tabulation([(200, 100, 900), (100, 120, 900)])
        with pytest.raises(EstimationError, match="bracket"):
            fp_estimate(cumulate(t), 10_000)  # both fractions above 0.5%


class TestApEstimate:
    @pytest.mark.parametrize("alpha", [1.5, 2.0])
    def test_exact_on_the_law(self, alpha):
        ps = tuple(0.0005 * 2**k for k in range(7))
        curve = ShareCurve(ps, tuple(top_share(alpha, p) for p in ps))
        assert ap_estimate(curve) == pytest.approx(alpha, rel=1e-10)

    def test_curve_outside_range_errors(self):
        ps = (0.002, 0.004, 0.008, 0.016)
        curve = ShareCurve(ps, tuple(top_share(2.0, p) for p in ps))
        with pytest.raises(ValueError, match="no extrapolation"):
            ap_estimate(curve)  # default p=0.001 below the curve

    def test_proportional_shares_rejected(self):
        ps = (0.0005, 0.001, 0.005, 0.01, 0.02)
        curve = ShareCurve(ps, tuple(p**1.5 * 100 for p in ps))
        with pytest.raises(EstimationError, match="undefined"):
            ap_estimate(curve)

    def test_fractile_order_enforced(self):
        ps = tuple(0.0005 * 2**k for k in range(7))
        curve = ShareCurve(ps, tuple(top_share(2.0, p) for p in ps))
        with pytest.raises(ValueError, match="p < q"):
            ap_estimate(curve, p=0.01, q=0.001)


class TestTailScan:
    def test_exact_pareto_scan_is_flat(self):
        cfg = SimConfig(alpha_true=1.8, n_draws=10**6, seed=21,
                        fractile_grid=(0.0005, 0.001, 0.002, 0.004, 0.008, 0.016))
        tab = tabulate_sample(sample_pareto(cfg, 0), fractile_grid=cfg.fractile_grid)
        points = tail_scan(tab, cfg.n_draws)
        good = [p for p in points if p.alpha_hat is not None]
        assert len(good) == len(points)
        for p in good:
            assert abs(p.alpha_hat - 1.8) <= 2.0 * p.se

    def test_bundled_capital_plateau(self, capital2019, population2019):
        points = tail_scan(capital2019, population2019)
        plateau = [
            p.alpha_hat
            for p in points
            if p.threshold is not None and p.threshold >= 500_000
        ]
        assert len(plateau) == 4
        assert max(plateau) - min(plateau) < 0.15
        assert all(1.05 < a < 1.35 for a in plateau)

    def test_failures_recorded_as_gaps(self, capital2019, population2019):
        # deep in the distribution the tail model fails and the minimizer
        # pins at the search boundary; those become gaps, not crashes
        points = tail_scan(capital2019, population2019)
        gaps = [p for p in points if p.alpha_hat is None]
        assert gaps and all(p.error for p in gaps)
        assert len(points) == capital2019.num_threshold_groups - 2

    def test_deterministic(self, capital2019, population2019):
        assert tail_scan(capital2019, population2019) == tail_scan(
            capital2019, population2019
        )
