import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from comsgarch import (
    DiffSeries,
    DomainError,
    ObservedSeries,
    RegimeParams,
    StatePath,
    TransitionRates,
    ValidationError,
    diff_series,
    neg_log_pseudo_likelihood,
    rho2_approx,
    rho2_exact,
    sigma2_next,
    transition_prob,
    volatility_path,
)


def one_state(alpha=1.0, beta=1.0, lam=1.0):
    return RegimeParams(alpha=[alpha], beta=[beta], lam=[lam])


class TestDiffSeries:
    def test_direct_subtraction(self):
        d = diff_series(ObservedSeries(t=[0, 1, 2], G=[0.0, 1.0, 3.0]))
        assert np.array_equal(d.Y, [1.0, 2.0])
        assert np.array_equal(d.dt, [1.0, 1.0])

    def test_constant_series_gives_zero_increments(self):
        d = diff_series(ObservedSeries(t=[0, 0.5, 1, 2], G=[2.0, 2.0, 2.0, 2.0]))
        assert np.all(d.Y == 0.0)

    def test_telescoping_sum(self):
        rng = np.random.default_rng(42)
        G = rng.normal(size=10)
        t = np.sort(rng.uniform(0, 5, size=10))
        d = diff_series(ObservedSeries(t=t, G=G))
        # telescoping: increments must rebuild the end-to-end change
        assert math.isclose(float(np.sum(d.Y)), float(G[-1] - G[0]), rel_tol=0, abs_tol=1e-12)
        assert math.isclose(float(np.sum(d.dt)), float(t[-1] - t[0]), rel_tol=0, abs_tol=1e-12)

    def test_non_increasing_times_rejected_with_index(self):
        with pytest.raises(ValidationError, match=r"t\[2\]"):
            ObservedSeries(t=[0, 1, 1], G=[0.0, 1.0, 2.0])


class TestSigma2Next:
    def test_pure_decay_limit(self):
        p = one_state(alpha=1e-12, beta=2.0, lam=1e-12)
        got = sigma2_next(1.5, 0.3, 0.4, p, 1)
        assert math.isclose(got, 1.5 * math.exp(-0.8), rel_tol=1e-9)

    def test_scalar_evaluation(self):
        got = sigma2_next(1.0, 0.04, 0.1, one_state(), 1)
        expected = 0.1 + 1.04 * math.exp(-0.1)  # = 1.0410309147573978
        assert math.isclose(got, expected, rel_tol=1e-15)
        assert math.isclose(got, 1.041031, rel_tol=1e-6)

    def test_small_gap_continuity(self):
        p = one_state(alpha=1.0, beta=1.0, lam=2.0)
        got = sigma2_next(1.0, 0.09, 1e-12, p, 1)
        assert math.isclose(got, 1.0 + 2.0 * 0.09, rel_tol=1e-9)

    def test_domain_errors(self):
        with pytest.raises(DomainError):
            sigma2_next(0.0, 0.1, 0.1, one_state(), 1)
        with pytest.raises(DomainError):
            sigma2_next(1.0, 0.1, 0.0, one_state(), 1)


class TestTransitionProb:
    def test_two_state_scalar_values(self):
        rates = TransitionRates([[0.0, 0.0], [0.1, 0.0]])  # rate 1 -> 2 is 0.1
        p12 = transition_prob(1, 2, 1.0, rates)
        p11 = transition_prob(1, 1, 1.0, rates)
        assert math.isclose(p12, 1 - math.exp(-0.1), rel_tol=1e-15)
        assert math.isclose(p11, math.exp(-0.1), rel_tol=1e-15)
        assert math.isclose(p12 + p11, 1.0, abs_tol=1e-15)

    def test_small_gap_continuity(self):
        rates = TransitionRates([[0.0, 0.3], [0.2, 0.0]])
        assert transition_prob(1, 2, 1e-14, rates) < 1e-12
        assert transition_prob(1, 1, 1e-14, rates) > 1 - 1e-12

    def test_single_state_always_stays(self):
        assert transition_prob(1, 1, 0.7, TransitionRates([[0.0]])) == 1.0

    @given(
        nu=st.integers(2, 4),
        dt=st.floats(0.01, 2.0),
        seed=st.integers(0, 10_000),
    )
    @settings(max_examples=60, deadline=None)
    def test_rows_sum_to_one(self, nu, dt, seed):
        rng = np.random.default_rng(seed)
        # keep the stay probability inside [0, 1] (its own domain check is
        # exercised separately below)
        eta = rng.uniform(0.0, 0.3, size=(nu, nu)) / ((nu - 1) * dt)
        rates = TransitionRates(eta)
        for k in range(1, nu + 1):
            total = sum(transition_prob(k, j, dt, rates) for j in range(1, nu + 1))
            assert math.isclose(total, 1.0, abs_tol=1e-12)

    def test_overlarge_rates_rejected_with_context(self):
        rates = TransitionRates(np.full((3, 3), 50.0))
        with pytest.raises(DomainError) as err:
            transition_prob(2, 2, 1.0, rates)
        assert err.value.state == 2
        assert err.value.dt == 1.0


class TestRho2:
    def test_exact_scalar_value(self):
        p = one_state(alpha=1e-12, beta=2.0, lam=1.0)  # beta - lam = 1
        got = rho2_exact(1.0, 1.0, p, 1)
        assert math.isclose(got, math.e - 1, rel_tol=1e-9)

    def test_exact_matches_first_order_at_small_gap(self):
        p = one_state(alpha=0.5, beta=3.0, lam=1.0)
        dt = 1e-8
        assert math.isclose(rho2_exact(1.3, dt, p, 1) / (1.3 * dt), 1.0, rel_tol=1e-6)

    def test_singular_direction_limit(self):
        # independent oracle: high-precision evaluation of the closed form
        mpmath = pytest.importorskip("mpmath")
        mpmath.mp.dps = 50
        sigma2_prev, alpha, dt, d = 1.0, 1.0, 1.0, mpmath.mpf("1e-9")
        exact_hp = (sigma2_prev - alpha / d) * (mpmath.expm1(d * dt) / d) + alpha * dt / d
        limit = sigma2_prev * dt - alpha * dt**2 / 2
        assert abs(float(exact_hp) - limit) / limit < 1e-6

        p = RegimeParams(alpha=[alpha], beta=[2.0 + 1e-9], lam=[2.0])
        got = rho2_exact(sigma2_prev, dt, p, 1)
        assert math.isclose(got, float(exact_hp), rel_tol=1e-6)
        assert math.isclose(got, limit, rel_tol=1e-6)

    def test_non_positive_result_rejected(self):
        p = one_state(alpha=10.0, beta=1.0, lam=2.0)  # beta - lam = -1
        with pytest.raises(DomainError):
            rho2_exact(0.1, 1.0, p, 1)

    def test_approx_products(self):
        assert rho2_approx(2.0, 0.5) == 1.0
        assert rho2_approx(1.0, 1.0) == 1.0

    @pytest.mark.parametrize("diff_bl", [1.0, -1.0, 0.1, -0.1])
    def test_first_order_convergence_sweep(self, diff_bl):
        lam = 2.0
        p = one_state(alpha=0.4, beta=lam + diff_bl, lam=lam)
        errs = []
        for dt in (0.2, 0.1, 0.05):
            exact = rho2_exact(0.9, dt, p, 1)
            errs.append(abs(rho2_approx(0.9, dt) - exact) / exact)
        for coarse, fine in zip(errs[:-1], errs[1:]):
            assert 0.7 * 2 <= coarse / fine <= 1.3 * 2


class TestVolatilityPath:
    def test_single_step_first_order_variance(self):
        d = DiffSeries(Y=[0.3], dt=[0.25])
        vol = volatility_path(d, StatePath([1]), one_state(), 2.0, "approx")
        assert vol.rho2[0] == 2.0 * 0.25

    def test_zero_increments_approach_fixed_point(self):
        p = one_state(alpha=0.05, beta=2.0, lam=1.0)
        n = 60
        d = DiffSeries(Y=np.zeros(n), dt=np.full(n, 0.1))
        vol = volatility_path(d, StatePath(np.ones(n, dtype=int)), p, 3.0, "approx")
        # independent fixed-point iteration
        expected = []
        prev = 3.0
        for _ in range(n):
            prev = 0.05 * 0.1 + prev * math.exp(-0.2)
            expected.append(prev)
        assert np.allclose(vol.sigma2, expected, rtol=1e-12)
        fp = 0.05 * 0.1 / (1 - math.exp(-0.2))
        gaps = np.abs(vol.sigma2 - fp)
        assert np.all(np.diff(gaps) < 0)
        assert gaps[-1] < 1e-3

    def test_two_state_manual_recursion(self):
        p = RegimeParams(alpha=[0.5, 2.0], beta=[1.0, 3.0], lam=[1.0, 0.5])
        d = DiffSeries(Y=[0.2, -0.4, 0.1], dt=[0.5, 0.25, 1.0])
        s = StatePath([1, 2, 1])
        vol = volatility_path(d, s, p, 1.0, "approx")
        s1 = 0.5 * 0.5 + (1.0 + 1.0 * 0.04) * math.exp(-0.5)
        s2 = 2.0 * 0.25 + (s1 + 0.5 * 0.16) * math.exp(-3.0 * 0.25)
        s3 = 0.5 * 1.0 + (s2 + 1.0 * 0.01) * math.exp(-1.0)
        assert np.allclose(vol.sigma2, [s1, s2, s3], rtol=1e-14)
        assert np.allclose(vol.rho2, [1.0 * 0.5, s1 * 0.25, s2 * 1.0], rtol=1e-14)

    @given(seed=st.integers(0, 10_000), exact=st.booleans())
    @settings(max_examples=40, deadline=None)
    def test_positive_output_for_positive_params(self, seed, exact):
        rng = np.random.default_rng(seed)
        n = 12
        d = DiffSeries(Y=rng.normal(size=n), dt=rng.uniform(0.05, 0.5, size=n))
        p = RegimeParams(
            alpha=rng.uniform(0.1, 2.0, 2),
            beta=rng.uniform(0.5, 5.0, 2),
            lam=rng.uniform(0.1, 2.0, 2),
        )
        s = StatePath(rng.integers(1, 3, size=n))
        vol = volatility_path(d, s, p, 1.0, "exact" if exact else "approx")
        assert np.all(vol.sigma2 > 0)
        assert np.all(vol.rho2 > 0)


class TestNegLogPseudoLikelihood:
    def test_standard_normal_single_observation(self):
        d = DiffSeries(Y=[0.0], dt=[1.0])
        got = neg_log_pseudo_likelihood(
            d, StatePath([1]), one_state(), TransitionRates([[0.0]]), 1.0, "approx"
        )
        assert math.isclose(got, 0.5 * math.log(2 * math.pi), rel_tol=1e-12)
        assert math.isclose(got, 0.918939, rel_tol=1e-6)

    def test_unreachable_state_leaves_value_unchanged(self):
        rng = np.random.default_rng(1)
        d = DiffSeries(Y=rng.normal(size=6), dt=np.full(6, 0.5))
        s = StatePath(np.ones(6, dtype=int))
        base = neg_log_pseudo_likelihood(
            d, s, one_state(), TransitionRates([[0.0]]), 1.0, "approx"
        )
        padded = RegimeParams(alpha=[1.0, 9.0], beta=[1.0, 4.0], lam=[1.0, 7.0])
        no_entry = TransitionRates([[0.0, 0.8], [0.0, 0.0]])  # rate into state 2 is zero
        same = neg_log_pseudo_likelihood(d, s, padded, no_entry, 1.0, "approx")
        assert same == base

    def test_matches_density_product_oracle(self):
        rng = np.random.default_rng(7)
        n = 5
        d = DiffSeries(Y=rng.normal(size=n), dt=rng.uniform(0.2, 0.8, size=n))
        p = RegimeParams(alpha=[0.5, 1.5], beta=[2.0, 1.0], lam=[1.0, 0.5])
        rates = TransitionRates([[0.0, 0.2], [0.3, 0.0]])
        s = StatePath([1, 2, 2, 1, 2])
        got = neg_log_pseudo_likelihood(d, s, p, rates, 1.3, "approx")

        # oracle: explicit per-step densities and transition probabilities
        prev = 1.3
        log_joint = 0.0
        for i in range(n):
            k = s.s[i] - 1
            rho2 = prev * d.dt[i]
            log_joint += stats.norm.logpdf(d.Y[i], scale=math.sqrt(rho2))
            if i > 0:
                kp = s.s[i - 1] - 1
                if k == kp:
                    xi = math.exp(-rates.eta[1 - kp, kp] * d.dt[i])
                else:
                    xi = 1 - math.exp(-rates.eta[k, kp] * d.dt[i])
                log_joint += math.log(xi)
            prev = p.alpha[k] * d.dt[i] + (prev + p.lam[k] * d.Y[i] ** 2) * math.exp(
                -p.beta[k] * d.dt[i]
            )
        assert math.isclose(got, -log_joint, rel_tol=1e-12)

    def test_zero_transition_factor_rejected_with_index(self):
        d = DiffSeries(Y=[0.1, 0.2], dt=[1.0, 1.0])
        p = RegimeParams(alpha=[1.0, 1.0], beta=[1.0, 1.0], lam=[1.0, 1.0])
        no_entry = TransitionRates([[0.0, 0.0], [0.0, 0.0]])
        with pytest.raises(DomainError) as err:
            neg_log_pseudo_likelihood(d, StatePath([1, 2]), p, no_entry, 1.0, "approx")
        assert err.value.index == 2

    def test_deterministic(self):
        rng = np.random.default_rng(3)
        d = DiffSeries(Y=rng.normal(size=8), dt=np.full(8, 0.3))
        p = one_state()
        args = (d, StatePath(np.ones(8, dtype=int)), p, TransitionRates([[0.0]]), 1.0, "exact")
        assert neg_log_pseudo_likelihood(*args) == neg_log_pseudo_likelihood(*args)
