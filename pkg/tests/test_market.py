import io
import math

import numpy as np
import pytest
from scipy import stats as sps

from lookback_hedge import market
from lookback_hedge.market import (
    BsmParams,
    Measure,
    MjdParams,
    anniversary_running_max,
    bsm_log_return,
    counter_normals,
    counter_poisson,
    counter_uniforms,
    export_paths,
    mjd_log_return,
    simulate_paths,
    to_risk_neutral,
)


def test_param_validation():
    with pytest.raises(ValueError):
        BsmParams(mu=0.1, sigma=-0.1)
    with pytest.raises(ValueError):
        MjdParams(alpha=0.1, sigma=0.15, lam=-1.0, mu_j=0.0, sigma_j=0.1, gamma=0.0)
    with pytest.raises(ValueError):
        MjdParams(alpha=0.1, sigma=0.15, lam=0.1, mu_j=0.0, sigma_j=0.1, gamma=1.5)
    with pytest.raises(ValueError):
        BsmParams(mu=math.nan, sigma=0.1)


class TestBsmLogReturn:
    def test_zero_volatility_is_pure_drift(self):
        assert bsm_log_return(BsmParams(0.10, 0.0), Measure.PHYSICAL, 1.0, 123.0) == pytest.approx(0.10, abs=1e-15)

    def test_deterministic_part(self, bsm_params):
        got = bsm_log_return(bsm_params, Measure.PHYSICAL, 1.0, 0.0)
        assert got == pytest.approx(0.08875, abs=1e-15)

    def test_risk_neutral_drift_uses_r(self, bsm_params):
        got = bsm_log_return(bsm_params, Measure.RISK_NEUTRAL, 1.0, 0.0, r=0.03)
        assert got == pytest.approx(0.03 - 0.5 * 0.15 ** 2, abs=1e-15)
        with pytest.raises(ValueError):
            bsm_log_return(bsm_params, Measure.RISK_NEUTRAL, 1.0, 0.0)

    def test_rejects_non_finite_noise(self, bsm_params):
        with pytest.raises(ValueError):
            bsm_log_return(bsm_params, Measure.PHYSICAL, 1.0, math.inf)

    def test_monthly_sample_mean_matches_moment(self, bsm_params):
        # Monte Carlo moment identity: mean log-return = (mu - sigma^2/2) * dt
        dt = 1.0 / 12.0
        z = counter_normals(99, 0, 10 ** 6)
        draws = bsm_log_return(bsm_params, Measure.PHYSICAL, dt, z)
        se = 0.15 * math.sqrt(dt) / math.sqrt(z.size)
        assert abs(draws.mean() - 0.08875 * dt) < 3 * se


class TestMjdLogReturn:
    def test_zero_intensity_reduces_to_bsm(self, mjd_params):
        from dataclasses import replace

        no_jumps = replace(mjd_params, lam=0.0)
        got = mjd_log_return(no_jumps, Measure.PHYSICAL, 1.0, 0.0, 0, [])
        assert got == pytest.approx(0.08875, abs=1e-15)

    def test_single_jump_drift_compensation(self, mjd_params):
        # independent scalar evaluation of the compensated drift plus one jump
        kappa = math.exp(-0.20 + 0.5 * 0.15 ** 2) - 1.0
        expected = (0.10 - 0.10 * kappa - 0.5 * 0.15 ** 2) * 1.0 - 0.20
        assert expected == pytest.approx(-0.09404934791918915, abs=1e-14)
        got = mjd_log_return(mjd_params, Measure.PHYSICAL, 1.0, 0.0, 1, [-0.20])
        assert got == pytest.approx(expected, abs=1e-14)

    def test_jump_count_size_mismatch(self, mjd_params):
        with pytest.raises(ValueError):
            mjd_log_return(mjd_params, Measure.PHYSICAL, 1.0, 0.0, 2, [-0.1])

    def test_risk_neutral_uses_transformed_compensator(self, mjd_params):
        q = to_risk_neutral(mjd_params)
        kappa_q = math.exp(q.mu_j + 0.5 * q.sigma_j ** 2) - 1.0
        expected = (0.03 - q.lam * kappa_q - 0.5 * 0.15 ** 2) * 1.0
        got = mjd_log_return(mjd_params, Measure.RISK_NEUTRAL, 1.0, 0.0, 0, [], r=0.03)
        assert got == pytest.approx(expected, abs=1e-14)


class TestMeasureChange:
    def test_jump_mean_shift(self, mjd_params):
        q = to_risk_neutral(mjd_params)
        assert q.mu_j == pytest.approx(-0.25625, abs=1e-15)

    def test_jump_intensity_scaling(self, mjd_params):
        q = to_risk_neutral(mjd_params)
        oracle = 0.1 * math.exp(2.5 * 0.228125)  # independent scalar recomputation
        assert q.lam == pytest.approx(oracle, abs=1e-12)

    def test_volatility_unchanged(self, mjd_params):
        assert to_risk_neutral(mjd_params).sigma_j == 0.15

    def test_gamma_one_is_identity(self, mjd_params):
        from dataclasses import replace

        q = to_risk_neutral(replace(mjd_params, gamma=1.0))
        assert (q.lam, q.mu_j) == (mjd_params.lam, mjd_params.mu_j)


class TestSimulatePaths:
    def test_zero_volatility_deterministic_path(self):
        # sigma = 0 leaves the pure drift mu*dt per period
        paths = simulate_paths(BsmParams(0.10, 0.0), Measure.PHYSICAL, 3, 10, 10, 100.0, seed=1)
        expected = 100.0 * np.exp(0.10 * np.arange(11))
        np.testing.assert_allclose(paths.spot_begin, np.tile(expected, (3, 1)), rtol=1e-12)

    def test_seed_determinism(self, mjd_params):
        a = simulate_paths(mjd_params, Measure.PHYSICAL, 50, 10, 10, 100.0, seed=7)
        b = simulate_paths(mjd_params, Measure.PHYSICAL, 50, 10, 10, 100.0, seed=7)
        assert np.array_equal(a.spot_begin, b.spot_begin)
        assert np.array_equal(a.running_max, b.running_max)

    @pytest.mark.parametrize("model_name", ["bsm", "mjd"])
    def test_path_i_independent_of_batch_size(self, model_name, bsm_params, mjd_params):
        model = bsm_params if model_name == "bsm" else mjd_params
        small = simulate_paths(model, Measure.PHYSICAL, 30, 12, 2, 100.0, seed=11)
        large = simulate_paths(model, Measure.PHYSICAL, 100, 12, 2, 100.0, seed=11)
        assert np.array_equal(small.spot_begin, large.spot_begin[:30])

    def test_terminal_max_excludes_final_year(self):
        # strictly increasing deterministic path: the year-10 price is the
        # largest but must not enter the anniversary maximum
        paths = simulate_paths(BsmParams(0.10, 0.0), Measure.PHYSICAL, 1, 10, 10, 100.0, seed=1)
        assert paths.terminal_max[0] == pytest.approx(paths.spot_begin[0, 9], rel=1e-15)
        assert paths.terminal_max[0] < paths.terminal_spot[0]

    def test_running_max_matches_brute_force(self, mjd_params):
        horizon = 3
        spy = 12
        paths = simulate_paths(mjd_params, Measure.PHYSICAL, 40, spy * horizon, horizon, 100.0, seed=23)
        for i in range(paths.n_paths):
            for n in range(paths.n_steps + 1):
                year = min(n // spy, horizon - 1)
                anniversaries = paths.spot_begin[i, [spy * m for m in range(year + 1)]]
                assert paths.running_max[i, n] == anniversaries.max()

    def test_positivity(self, mjd_params):
        paths = simulate_paths(mjd_params, Measure.PHYSICAL, 2000, 10, 10, 100.0, seed=3)
        assert (paths.spot_begin > 0).all()

    def test_rejects_degenerate_shapes(self, bsm_params):
        with pytest.raises(ValueError):
            simulate_paths(bsm_params, Measure.PHYSICAL, 0, 10, 10, 100.0, seed=1)
        with pytest.raises(ValueError):
            simulate_paths(bsm_params, Measure.PHYSICAL, 5, 0, 10, 100.0, seed=1)
        with pytest.raises(ValueError):
            # anniversaries must lie on the grid
            simulate_paths(bsm_params, Measure.PHYSICAL, 5, 15, 10, 100.0, seed=1)

    @pytest.mark.parametrize("model_name", ["bsm", "mjd"])
    def test_q_measure_martingale(self, model_name, bsm_params, mjd_params):
        model = bsm_params if model_name == "bsm" else mjd_params
        paths = simulate_paths(model, Measure.RISK_NEUTRAL, 10 ** 6, 10, 10, 100.0, seed=42, r=0.03)
        discounted = math.exp(-0.3) * paths.terminal_spot
        se = discounted.std(ddof=1) / math.sqrt(paths.n_paths)
        assert abs(discounted.mean() - 100.0) < 3 * se

    def test_mjd_degenerates_to_bsm_distribution(self, bsm_params, mjd_params):
        from dataclasses import replace

        no_jumps = replace(mjd_params, lam=0.0)
        paths = simulate_paths(no_jumps, Measure.PHYSICAL, 10 ** 5, 1, 1, 100.0, seed=5)
        returns = np.log(paths.spot_begin[:, 1] / 100.0)
        # same diffusion stream: lam=0 must agree with BSM(mu:=alpha) exactly
        bsm = simulate_paths(bsm_params, Measure.PHYSICAL, 10 ** 5, 1, 1, 100.0, seed=5)
        np.testing.assert_array_equal(paths.spot_begin, bsm.spot_begin)
        # and distributionally with the analytic law
        result = sps.kstest(returns, "norm", args=(0.08875, 0.15))
        assert result.pvalue > 0.01


class TestDrawPipeline:
    def test_uniforms_open_interval(self):
        u = counter_uniforms(0, 0, 10 ** 5)
        assert u.min() > 0.0 and u.max() < 1.0

    def test_normals_inverse_cdf_moments(self):
        z = counter_normals(1, 2, 10 ** 5)
        assert abs(z.mean()) < 0.02 and abs(z.std() - 1.0) < 0.01

    def test_poisson_inverse_cdf_matches_pmf(self):
        counts = counter_poisson(3, 1, 2 * 10 ** 5, rate=0.177)
        for k in (0, 1, 2):
            expected = math.exp(-0.177) * 0.177 ** k / math.factorial(k)
            assert abs((counts == k).mean() - expected) < 0.004
        assert counts.min() >= 0

    def test_poisson_zero_rate(self):
        assert counter_poisson(3, 1, 100, rate=0.0).max() == 0


def test_export_paths_round_trip(bsm_params):
    paths = simulate_paths(bsm_params, Measure.PHYSICAL, 3, 2, 2, 100.0, seed=9)
    buffer = io.StringIO()
    export_paths(paths, buffer)
    lines = buffer.getvalue().strip().split("\n")
    assert lines[0] == "path,step,time_years,spot_begin,running_max"
    assert len(lines) == 1 + 3 * 3
    row = lines[1].split(",")
    assert float(row[3]) == pytest.approx(100.0)


def test_running_max_helper_caps_at_final_year():
    spot = np.array([[1.0, 5.0, 2.0, 9.0]])
    z = anniversary_running_max(spot, steps_per_year=1, horizon_years=3)
    np.testing.assert_allclose(z, [[1.0, 5.0, 5.0, 5.0]])
