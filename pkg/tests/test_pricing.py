import math

import numpy as np
import pytest

from lookback_hedge.market import Measure, MjdRiskNeutralJumps, simulate_paths, to_risk_neutral
from lookback_hedge.pricing import (
    OptionKind,
    VanillaSpec,
    bs_price_delta,
    lookback_rn_price,
    merton_price_delta,
)

# frozen oracle: numerical integration of the discounted lognormal payoff
# expectation (scipy quad, abs err < 2e-13) at S=K=100, r=0.03, sigma=0.15, tau=1
QUAD_ATM_CALL = 7.485087593913
QUAD_ATM_DELTA = 0.6083418831


class TestBlackScholes:
    def test_atm_call_matches_quadrature_oracle(self):
        quote = bs_price_delta(100, 100, 0.03, 0.15, 1.0, OptionKind.CALL)
        assert quote.price == pytest.approx(QUAD_ATM_CALL, rel=1e-9)
        assert quote.delta == pytest.approx(QUAD_ATM_DELTA, abs=1e-8)

    def test_sure_exercise_limit(self):
        quote = bs_price_delta(100, 1e-10, 0.03, 0.15, 1.0, OptionKind.CALL)
        assert quote.price == pytest.approx(100.0, rel=1e-9)
        assert quote.delta == pytest.approx(1.0, abs=1e-12)

    def test_expiry_is_intrinsic_with_kink_resolved_itm(self):
        assert bs_price_delta(110, 100, 0.03, 0.15, 0.0, OptionKind.CALL).price == 10.0
        assert bs_price_delta(110, 100, 0.03, 0.15, 0.0, OptionKind.CALL).delta == 1.0
        assert bs_price_delta(90, 100, 0.03, 0.15, 0.0, OptionKind.CALL).delta == 0.0
        assert bs_price_delta(100, 100, 0.03, 0.15, 0.0, OptionKind.PUT).delta == -1.0

    def test_put_call_parity_random_grid(self):
        rng = np.random.default_rng(12)
        for _ in range(100):
            s = rng.uniform(20, 200)
            k = rng.uniform(20, 200)
            r = rng.uniform(-0.02, 0.10)
            sigma = rng.uniform(0.05, 0.6)
            tau = rng.uniform(0.1, 5.0)
            call = bs_price_delta(s, k, r, sigma, tau, OptionKind.CALL).price
            put = bs_price_delta(s, k, r, sigma, tau, OptionKind.PUT).price
            assert call - put == pytest.approx(s - k * math.exp(-r * tau), abs=1e-12)

    def test_call_price_monotone_in_strike(self):
        prices = [bs_price_delta(100, k, 0.03, 0.15, 1.0, OptionKind.CALL).price for k in np.linspace(50, 150, 40)]
        assert all(a >= b - 1e-12 for a, b in zip(prices, prices[1:]))
        puts = [bs_price_delta(100, k, 0.03, 0.15, 1.0, OptionKind.PUT).price for k in np.linspace(50, 150, 40)]
        assert all(a <= b + 1e-12 for a, b in zip(puts, puts[1:]))

    @pytest.mark.parametrize("kind", [OptionKind.CALL, OptionKind.PUT])
    def test_delta_matches_finite_difference(self, kind):
        for s in (80.0, 100.0, 125.0):
            quote = bs_price_delta(s, 100, 0.03, 0.15, 1.0, kind)
            h = s * 1e-6
            up = bs_price_delta(s + h, 100, 0.03, 0.15, 1.0, kind).price
            dn = bs_price_delta(s - h, 100, 0.03, 0.15, 1.0, kind).price
            fd = (up - dn) / (2 * h)
            assert quote.delta == pytest.approx(fd, rel=1e-6)

    def test_homogeneity_in_spot_and_strike(self):
        base = bs_price_delta(100, 90, 0.03, 0.15, 1.0, OptionKind.CALL)
        scaled = bs_price_delta(250, 225, 0.03, 0.15, 1.0, OptionKind.CALL)
        assert scaled.price == pytest.approx(2.5 * base.price, rel=1e-12)
        assert scaled.delta == pytest.approx(base.delta, rel=1e-12)

    def test_input_validation(self):
        with pytest.raises(ValueError):
            bs_price_delta(-1, 100, 0.03, 0.15, 1.0, OptionKind.CALL)
        with pytest.raises(ValueError):
            bs_price_delta(100, 100, 0.03, -0.15, 1.0, OptionKind.CALL)


class TestMerton:
    def test_zero_intensity_collapses_to_black_scholes(self):
        q = MjdRiskNeutralJumps(lam=0.0, mu_j=-0.25, sigma_j=0.15)
        for kind in OptionKind:
            bs = bs_price_delta(100, 95, 0.03, 0.15, 1.0, kind)
            mj = merton_price_delta(100, 95, 0.03, 0.15, q, 1.0, kind)
            assert mj.price == pytest.approx(bs.price, abs=1e-14)
            assert mj.delta == pytest.approx(bs.delta, abs=1e-14)

    def test_series_cutoff_converged(self, mjd_params):
        q = to_risk_neutral(mjd_params)
        p50 = merton_price_delta(100, 100, 0.03, 0.15, q, 1.0, OptionKind.CALL, series_cutoff=50)
        p60 = merton_price_delta(100, 100, 0.03, 0.15, q, 1.0, OptionKind.CALL, series_cutoff=60)
        assert abs(p50.price - p60.price) < 1e-10

    def test_tail_mass_guard(self, mjd_params):
        q = to_risk_neutral(mjd_params)
        with pytest.raises(ValueError, match="tail mass"):
            merton_price_delta(100, 100, 0.03, 0.15, q, 1.0, OptionKind.CALL, series_cutoff=1)

    def test_put_call_parity(self, mjd_params):
        q = to_risk_neutral(mjd_params)
        for k in (80.0, 100.0, 120.0):
            call = merton_price_delta(100, k, 0.03, 0.15, q, 1.0, OptionKind.CALL).price
            put = merton_price_delta(100, k, 0.03, 0.15, q, 1.0, OptionKind.PUT).price
            assert call - put == pytest.approx(100 - k * math.exp(-0.03), abs=1e-12)

    def test_delta_matches_finite_difference(self, mjd_params):
        q = to_risk_neutral(mjd_params)
        quote = merton_price_delta(100, 100, 0.03, 0.15, q, 1.0, OptionKind.PUT)
        h = 1e-4
        up = merton_price_delta(100 + h, 100, 0.03, 0.15, q, 1.0, OptionKind.PUT).price
        dn = merton_price_delta(100 - h, 100, 0.03, 0.15, q, 1.0, OptionKind.PUT).price
        assert quote.delta == pytest.approx((up - dn) / (2 * h), rel=1e-6)

    def test_homogeneity(self, mjd_params):
        q = to_risk_neutral(mjd_params)
        base = merton_price_delta(100, 110, 0.03, 0.15, q, 1.0, OptionKind.CALL)
        scaled = merton_price_delta(50, 55, 0.03, 0.15, q, 1.0, OptionKind.CALL)
        assert scaled.price == pytest.approx(base.price / 2, rel=1e-12)
        assert scaled.delta == pytest.approx(base.delta, rel=1e-12)

    def test_matches_monte_carlo_quickly(self, mjd_params):
        # 1e5-path smoke version of the acceptance check
        q = to_risk_neutral(mjd_params)
        closed = merton_price_delta(100, 100, 0.03, 0.15, q, 1.0, OptionKind.CALL).price
        paths = simulate_paths(mjd_params, Measure.RISK_NEUTRAL, 10 ** 5, 1, 1, 100.0, seed=77, r=0.03)
        payoff = np.maximum(paths.terminal_spot - 100.0, 0.0) * math.exp(-0.03)
        se = payoff.std(ddof=1) / math.sqrt(paths.n_paths)
        assert abs(payoff.mean() - closed) < 4 * se


class TestLookback:
    def test_zero_volatility_price_is_zero(self):
        from lookback_hedge.market import BsmParams

        quote = lookback_rn_price(BsmParams(mu=0.10, sigma=0.0), 0.03, 10, 100.0, 1000, seed=5)
        assert quote.price == 0.0
        assert quote.stderr == 0.0

    def test_seeded_determinism(self, bsm_params):
        a = lookback_rn_price(bsm_params, 0.03, 10, 100.0, 20_000, seed=5)
        b = lookback_rn_price(bsm_params, 0.03, 10, 100.0, 20_000, seed=5)
        assert a.price == b.price

    def test_reported_standard_error_scale(self, bsm_params):
        small = lookback_rn_price(bsm_params, 0.03, 10, 100.0, 10_000, seed=5)
        large = lookback_rn_price(bsm_params, 0.03, 10, 100.0, 40_000, seed=5)
        assert large.stderr == pytest.approx(small.stderr / 2, rel=0.15)


def test_vanilla_spec_validation():
    with pytest.raises(ValueError):
        VanillaSpec(OptionKind.CALL, moneyness=-1.0)
    spec = VanillaSpec(OptionKind.PUT, moneyness=0.9)
    assert spec.maturity == 1.0
