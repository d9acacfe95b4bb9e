import itertools
import math

import numpy as np
import pytest
from scipy import stats

from comsgarch import (
    DiffSeries,
    DomainError,
    RegimeParams,
    SimConfig,
    StatePath,
    TransitionRates,
    ValidationError,
    balanced_params,
    dispersion_product,
    ensemble_weight,
    enumerate_paths,
    perturbation_gaps,
    simulate,
    stability_experiment,
    stability_ratio,
    state_bias,
    vol_rel_bias,
    volatility_path,
)


def small_instance(seed, n=3):
    rates = TransitionRates([[0.0, 0.1], [0.1, 0.0]])
    params = balanced_params(10.0, [0.1, 0.25])
    cfg = SimConfig(n=n, zeta=10.0, balance=(0.1, 0.25), rates=rates, seed=seed)
    obs, diff, path, vol = simulate(cfg, params)
    return diff, path, params, rates


class TestEnumeratePaths:
    def test_single_state_single_path(self):
        diff, _, _, _ = small_instance(0)
        one = RegimeParams(alpha=[1.0], beta=[1.0], lam=[1.0])
        enum = enumerate_paths(diff, one, TransitionRates([[0.0]]), 1.0)
        assert enum.paths.shape == (1, diff.n)
        assert np.allclose(enum.posterior(), [1.0])

    def test_two_state_three_steps(self):
        diff, path, params, rates = small_instance(1)
        enum = enumerate_paths(diff, params, rates, 0.5)
        assert enum.paths.shape == (8, 3)
        assert math.isclose(enum.posterior().sum(), 1.0, abs_tol=1e-12)

    def test_size_guard(self):
        rng = np.random.default_rng(0)
        diff = DiffSeries(Y=rng.normal(size=25), dt=np.full(25, 0.1))
        params = balanced_params(10.0, [0.1, 0.25])
        with pytest.raises(ValidationError):
            enumerate_paths(diff, params, TransitionRates([[0.0, 0.1], [0.1, 0.0]]), 0.5)


class TestEnsembleWeight:
    def test_no_drop_degeneracy(self):
        count, weight = ensemble_weight(3, 3, 0.0)
        assert (count, weight) == (1, 1.0)  # 0^0 convention
        count, weight = ensemble_weight(5, 3, 0.0)
        assert count == 6 and weight == 0.0

    def test_span_count(self):
        count, _ = ensemble_weight(5, 3, 0.1)
        assert count == math.comb(4, 2) == 6

    def test_matches_exhaustive_drop_patterns(self):
        # oracle: enumerate keep/drop patterns of the k-1 slots after the pivot
        p = 0.07
        for b in range(1, 6):
            for k in range(b, 13):
                count, weight = ensemble_weight(k, b, p)
                patterns = [
                    pat for pat in itertools.product((0, 1), repeat=k - 1)
                    if sum(pat) == b - 1
                ]
                assert count == len(patterns)
                if patterns:
                    probs = {p ** (pat.count(0)) * (1 - p) ** (pat.count(1)) for pat in map(list, patterns)}
                    assert len(probs) == 1
                    assert math.isclose(weight, probs.pop(), rel_tol=1e-12)

    def test_negative_binomial_normalization(self):
        b, p = 4, 0.15
        ks = np.arange(b, b + 200)
        mass = np.array([np.prod(ensemble_weight(int(k), b, p)) for k in ks]) * (1 - p)
        partial = np.cumsum(mass)
        assert partial[-1] == pytest.approx(1.0, abs=1e-12)
        # cross-check against the standard negative binomial distribution
        cdf = stats.nbinom.cdf(ks - b, b, 1 - p)
        assert np.allclose(partial, cdf, atol=1e-12)

    def test_k_below_b_rejected(self):
        with pytest.raises(DomainError):
            ensemble_weight(2, 3, 0.1)


class TestStabilityQuantities:
    def test_equal_pair_ratio_is_half(self):
        assert stability_ratio([0.7, 0.7]) == pytest.approx(0.5, abs=1e-15)

    def test_any_pair_below_one(self):
        rng = np.random.default_rng(123)
        pairs = rng.uniform(1e-3, 10.0, size=(10_000, 2))
        for r1, r2 in pairs:
            assert stability_ratio([r1, r2]) < 1.0

    def test_pair_ratio_closed_form(self):
        r1, r2 = 0.3, 1.7
        expected = 2 * r1 * r2 / (r1 + r2) ** 2
        assert stability_ratio([r1, r2]) == pytest.approx(expected, rel=1e-12)

    def test_general_form_product_three_equal(self):
        assert dispersion_product([2.0, 2.0, 2.0]) == pytest.approx(9.0, rel=1e-12)
        assert dispersion_product([2.0, 2.0, 2.0]) > 1.0

    def test_gap_pair_closed_forms(self):
        merged, split = perturbation_gaps([0.4, 0.9], 0.2)
        assert merged == pytest.approx(0.2**2 / (0.4 + 0.9), rel=1e-12)
        assert split == pytest.approx(0.2**2 / (2 * 0.4) + 0.2**2 / (2 * 0.9), rel=1e-12)
        assert merged / split == pytest.approx(stability_ratio([0.4, 0.9]), rel=1e-12)


class TestStabilityExperiment:
    def setup_method(self):
        rng = np.random.default_rng(5)
        n = 40
        self.diff = DiffSeries(Y=rng.normal(0, 0.3, size=n), dt=np.full(n, 0.1))
        self.path = StatePath(np.ones(n, dtype=int))
        self.params = RegimeParams(alpha=[1.0], beta=[2.0], lam=[1.0])
        self.rates = TransitionRates([[0.0]])

    def test_zero_noise_gives_zero_shifts(self):
        res = stability_experiment(
            self.params, self.rates, self.path, self.diff, 0.5, eps=0.0, reps=100, seed=1
        )
        assert res.mean_with_ni == 0.0
        assert res.mean_without_ni == 0.0

    def test_two_point_span_matches_closed_forms(self):
        # 4 points -> increments (1,2,3); dropping the single interior
        # droppable point merges increments 2 and 3 into one span
        rng = np.random.default_rng(3)
        diff = DiffSeries(Y=rng.normal(0, 0.4, size=3), dt=np.array([0.2, 0.3, 0.4]))
        path = StatePath([1, 1, 1])
        vol = volatility_path(diff, path, self.params, 0.5)
        eps, reps = 0.15, 10_000
        # force the drop: with ni_rate ~ 1, the only droppable point goes
        res = stability_experiment(
            self.params, self.rates, path, diff, 0.5, eps=eps, reps=reps, seed=2, ni_rate=0.999999
        )
        r1, r2, r3 = vol.rho2
        expect_ni = eps**2 / (2 * r1) + eps**2 / (r2 + r3)
        expect_split = eps**2 / (2 * r1) + eps**2 / (2 * r2) + eps**2 / (2 * r3)
        # each mean is within 3 standard errors of its closed form
        scale = 3 * res.se_difference + 3 * eps**2 / math.sqrt(reps)
        assert abs(res.mean_with_ni - expect_ni) < max(scale, 3e-3)
        assert abs(res.mean_without_ni - expect_split) < max(scale, 3e-3)

    def test_merged_shift_significantly_smaller(self):
        res = stability_experiment(
            self.params, self.rates, self.path, self.diff, 0.5,
            eps=0.1, reps=10_000, seed=7, ni_rate=0.3,
        )
        assert res.mean_with_ni < res.mean_without_ni - 3 * res.se_difference

    def test_fixed_mask_reproducible(self):
        a = stability_experiment(
            self.params, self.rates, self.path, self.diff, 0.5, eps=0.1, reps=500, seed=9
        )
        b = stability_experiment(
            self.params, self.rates, self.path, self.diff, 0.5, eps=0.1, reps=500, seed=9
        )
        assert a == b


class TestMetrics:
    def test_perfect_prediction(self):
        path = StatePath([1, 2, 2])
        freq = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 1.0]])
        assert state_bias(path, freq) == 0.0
        assert vol_rel_bias([1.0, 2.0], [1.0, 2.0]) == 0.0

    def test_always_wrong_hard_prediction(self):
        path = StatePath([1, 2, 1])
        freq = np.array([[0.0, 1.0], [1.0, 0.0], [0.0, 1.0]])
        assert state_bias(path, freq) == 1.0

    def test_hand_computed_three_points(self):
        path = StatePath([2, 1, 2])
        f2 = np.array([0.8, 0.3, 0.5])
        expected = (abs(1 - 0.8) + abs(0 - 0.3) + abs(1 - 0.5)) / 3
        assert state_bias(path, f2) == pytest.approx(expected, rel=1e-12)
        got = vol_rel_bias([1.0, 2.0, 4.0], [1.1, 1.8, 4.0])
        assert got == pytest.approx((0.1 / 1.0 + 0.2 / 2.0 + 0.0) / 3 * 100, rel=1e-12)

    def test_zero_true_variance_excluded_with_warning(self):
        with pytest.warns(UserWarning):
            got = vol_rel_bias([0.0, 2.0], [5.0, 2.2])
        assert got == pytest.approx(0.2 / 2.0 * 100, rel=1e-12)
