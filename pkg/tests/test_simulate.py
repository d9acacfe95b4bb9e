import math

import numpy as np
import pytest
from scipy import stats

from comsgarch import (
    SimConfig,
    TransitionRates,
    ValidationError,
    balanced_params,
    diff_series,
    perturb,
    simulate,
    transition_prob,
)


def two_state_rates(eta=0.1):
    return TransitionRates([[0.0, eta], [eta, 0.0]])


class TestBalancedParams:
    def test_one_state_family_values(self):
        p = balanced_params(10.0, [0.1], family="cogarch")
        assert math.isclose(p.alpha[0], 1.0, rel_tol=1e-15)
        assert math.isclose(p.beta[0], 23.025850929940457, rel_tol=1e-12)
        assert math.isclose(p.lam[0], 1.0, rel_tol=1e-15)

    def test_switching_family_values(self):
        p = balanced_params(10.0, [0.1, 0.25], family="comsgarch")
        assert np.allclose(p.alpha, [1.0, 2.5], rtol=1e-15)
        assert np.allclose(p.beta, [23.025850929940457, 13.862943611198906], rtol=1e-12)
        assert np.allclose(p.lam, [10.0, 10.0], rtol=1e-15)

    def test_boundary_constant_rejected(self):
        with pytest.raises(ValidationError):
            balanced_params(10.0, [1.0], family="cogarch")
        with pytest.raises(ValidationError):
            balanced_params(10.0, [0.0], family="cogarch")

    def test_unknown_family_rejected(self):
        with pytest.raises(ValidationError):
            balanced_params(10.0, [0.1], family="garch")


class TestSimulate:
    def test_same_seed_identical(self):
        cfg = SimConfig(n=50, zeta=10.0, balance=(0.1, 0.25), rates=two_state_rates(), seed=11)
        params = balanced_params(10.0, [0.1, 0.25])
        a = simulate(cfg, params)
        b = simulate(cfg, params)
        assert np.array_equal(a[0].G, b[0].G)
        assert np.array_equal(a[2].s, b[2].s)
        assert np.array_equal(a[3].sigma2, b[3].sigma2)

    def test_innovation_moments(self):
        cfg = SimConfig(n=100_000, zeta=10.0, balance=(0.1,), seed=5)
        params = balanced_params(10.0, [0.1], family="cogarch")
        _, diff, _, vol = simulate(cfg, params)
        eps = diff.Y / np.sqrt(vol.rho2)
        assert abs(eps.mean()) < 0.01
        assert abs(eps.var() - 1.0) < 0.02

    def test_symmetric_chain_occupancy(self):
        cfg = SimConfig(n=100_000, zeta=10.0, balance=(0.1, 0.25), rates=two_state_rates(0.5), seed=2)
        params = balanced_params(10.0, [0.1, 0.25])
        _, _, path, _ = simulate(cfg, params)
        assert abs((path.s == 1).mean() - 0.5) < 0.02

    def test_transition_frequencies_match_kernel(self):
        cfg = SimConfig(n=100_000, zeta=10.0, balance=(0.1, 0.25), rates=two_state_rates(0.5), seed=9)
        params = balanced_params(10.0, [0.1, 0.25])
        _, diff, path, _ = simulate(cfg, params)
        dt = float(diff.dt[0])
        for k in (1, 2):
            out = path.s[:-1] == k
            observed = np.array([(out & (path.s[1:] == j)).sum() for j in (1, 2)])
            expected = out.sum() * np.array(
                [transition_prob(k, j, dt, two_state_rates(0.5)) for j in (1, 2)]
            )
            chi2 = stats.chisquare(observed, expected)
            assert chi2.pvalue > 1e-4

    def test_levels_are_cumulative_increments(self):
        cfg = SimConfig(n=200, zeta=5.0, balance=(0.2,), seed=3)
        params = balanced_params(5.0, [0.2], family="cogarch")
        obs, diff, _, _ = simulate(cfg, params)
        assert np.allclose(obs.G[1:], np.cumsum(diff.Y), rtol=0, atol=1e-12)
        rebuilt = diff_series(obs)
        assert np.allclose(rebuilt.Y, diff.Y, atol=1e-12)

    def test_exponential_gaps(self):
        cfg = SimConfig(n=50_000, zeta=4.0, balance=(0.2,), seed=6, gap_mode="exponential")
        params = balanced_params(4.0, [0.2], family="cogarch")
        _, diff, _, _ = simulate(cfg, params)
        assert abs(diff.dt.mean() - 0.25) < 0.005
        assert len(np.unique(diff.dt)) > 1

    def test_unknown_innovation_rejected(self):
        with pytest.raises(ValidationError):
            SimConfig(n=10, zeta=1.0, balance=(0.5,), innovation="levy")

    def test_mismatched_params_rejected(self):
        cfg = SimConfig(n=10, zeta=10.0, balance=(0.1, 0.25), rates=two_state_rates(), seed=0)
        with pytest.raises(ValidationError):
            simulate(cfg, balanced_params(10.0, [0.1], family="cogarch"))


class TestPerturb:
    @pytest.fixture()
    def sim(self):
        cfg = SimConfig(n=2_000, zeta=10.0, balance=(0.1, 0.25), rates=two_state_rates(0.5), seed=4)
        params = balanced_params(10.0, [0.1, 0.25])
        _, diff, path, _ = simulate(cfg, params)
        return diff, path

    def test_zero_scale_is_identity(self, sim):
        diff, path = sim
        out = perturb(diff, path, 0.0, "global_sd", seed=1)
        assert np.array_equal(out.Y, diff.Y)
        assert np.array_equal(out.dt, diff.dt)

    def test_global_noise_scale(self):
        cfg = SimConfig(n=100_000, zeta=10.0, balance=(0.1,), seed=8)
        params = balanced_params(10.0, [0.1], family="cogarch")
        _, diff, path, _ = simulate(cfg, params)
        out = perturb(diff, path, 0.01, "global_sd", seed=2)
        target = 0.01 * np.std(diff.Y, ddof=1)
        got = np.std(out.Y - diff.Y, ddof=1)
        assert abs(got - target) / target < 0.05
        assert np.array_equal(out.dt, diff.dt)

    def test_per_state_noise_scale(self, sim):
        diff, path = sim
        out = perturb(diff, path, 0.5, "per_state_sd", seed=3)
        z = out.Y - diff.Y
        for state in (1, 2):
            mask = path.s == state
            target = 0.5 * np.std(diff.Y[mask], ddof=1)
            got = np.std(z[mask], ddof=1)
            assert abs(got - target) / target < 0.10

    def test_thin_state_rejected(self):
        diff = diff_series_from(np.arange(5.0), [0.0, 1.0, 0.5, 2.0, 1.0])
        from comsgarch import StatePath

        with pytest.raises(ValidationError):
            perturb(diff, StatePath([1, 1, 1, 2]), 0.1, "per_state_sd", seed=0)

    def test_negative_scale_rejected(self, sim):
        diff, path = sim
        with pytest.raises(ValidationError):
            perturb(diff, path, -0.1, "global_sd", seed=0)


def diff_series_from(t, G):
    from comsgarch import ObservedSeries

    return diff_series(ObservedSeries(t=t, G=G))
