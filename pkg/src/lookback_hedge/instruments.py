"""Tradable-asset menus and per-period quotes.

Four menus are supported: the underlying rebalanced yearly or monthly, an
ATM call/put pair, and a six-option menu (calls at moneyness 1.0/1.1/1.2,
puts at 1.0/0.9/0.8).  All options mature in one year, are bought at the
start of a year and held to expiry, so their end-of-period value is the
terminal payoff.  Quote vectors always carry the underlying in slot 0
followed by the D options.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .pricing import OptionKind, VanillaSpec

__all__ = [
    "InstrumentVariant",
    "InstrumentSet",
    "PeriodQuotes",
    "quotes_at",
    "unit_quotes",
    "lookback_payoff",
]


class InstrumentVariant(Enum):
    STOCK_YEARLY = "stock_yearly"
    STOCK_MONTHLY = "stock_monthly"
    TWO_OPTIONS = "two_options"
    SIX_OPTIONS = "six_options"


_OPTION_MENUS = {
    InstrumentVariant.STOCK_YEARLY: (),
    InstrumentVariant.STOCK_MONTHLY: (),
    InstrumentVariant.TWO_OPTIONS: (
        VanillaSpec(OptionKind.CALL, 1.0),
        VanillaSpec(OptionKind.PUT, 1.0),
    ),
    InstrumentVariant.SIX_OPTIONS: (
        VanillaSpec(OptionKind.CALL, 1.0),
        VanillaSpec(OptionKind.CALL, 1.1),
        VanillaSpec(OptionKind.CALL, 1.2),
        VanillaSpec(OptionKind.PUT, 1.0),
        VanillaSpec(OptionKind.PUT, 0.9),
        VanillaSpec(OptionKind.PUT, 0.8),
    ),
}


@dataclass(frozen=True)
class InstrumentSet:
    """One of the four hedging menus."""

    variant: InstrumentVariant

    @property
    def options(self) -> tuple[VanillaSpec, ...]:
        return _OPTION_MENUS[self.variant]

    @property
    def n_options(self) -> int:
        return len(self.options)

    @property
    def trades_stock(self) -> bool:
        return self.n_options == 0

    @property
    def n_decisions(self) -> int:
        """Risky positions chosen per rebalance: the stock, or the D options."""
        return 1 if self.trades_stock else self.n_options

    @property
    def steps_per_year(self) -> int:
        return 12 if self.variant is InstrumentVariant.STOCK_MONTHLY else 1

    def rebalance_steps(self, horizon_years: int) -> int:
        return self.steps_per_year * int(horizon_years)


@dataclass(frozen=True)
class PeriodQuotes:
    """Begin prices, end values, and deltas for one trading period.

    Vectors have length 1 + D with the underlying first.  End values of
    expiring options are their payoffs.
    """

    begin_prices: np.ndarray
    end_values: np.ndarray
    deltas: np.ndarray


def option_payoff(kind: OptionKind, spot, strike):
    if kind is OptionKind.CALL:
        return np.maximum(spot - strike, 0.0)
    return np.maximum(strike - spot, 0.0)


def quotes_at(iset: InstrumentSet, pricer, spot_begin: float, spot_end: float, r: float) -> PeriodQuotes:
    """Quotes for one period: strikes set by moneyness times the begin spot."""
    if spot_begin <= 0 or spot_end <= 0:
        raise ValueError("spot prices must be positive")
    d = iset.n_options
    begin = np.empty(1 + d)
    end = np.empty(1 + d)
    deltas = np.empty(1 + d)
    begin[0], end[0], deltas[0] = spot_begin, spot_end, 1.0
    for j, spec in enumerate(iset.options, start=1):
        strike = spec.moneyness * spot_begin
        quote = pricer.price_delta(spot_begin, strike, spec.maturity, spec.kind)
        begin[j] = quote.price
        end[j] = option_payoff(spec.kind, spot_end, strike)
        deltas[j] = quote.delta
    return PeriodQuotes(begin_prices=begin, end_values=end, deltas=deltas)


def unit_quotes(iset: InstrumentSet, pricer) -> tuple[np.ndarray, np.ndarray]:
    """Option prices and deltas per unit of spot.

    Both pricing models are positively homogeneous in (spot, strike), so at
    strike = moneyness * spot the price scales linearly with spot and the
    delta is spot-independent.  Returns (unit_prices, deltas), each length D.
    """
    prices = np.empty(iset.n_options)
    deltas = np.empty(iset.n_options)
    for j, spec in enumerate(iset.options):
        quote = pricer.price_delta(1.0, spec.moneyness, spec.maturity, spec.kind)
        prices[j] = quote.price
        deltas[j] = quote.delta
    return prices, deltas


def lookback_payoff(terminal_spot, terminal_max):
    """Payoff max(Z_T - S_T, 0) of the ratchet-guarantee lookback put."""
    terminal_spot = np.asarray(terminal_spot, dtype=float)
    terminal_max = np.asarray(terminal_max, dtype=float)
    if np.any(terminal_spot <= 0) or np.any(terminal_max <= 0):
        raise ValueError("terminal prices must be positive")
    out = np.maximum(terminal_max - terminal_spot, 0.0)
    return float(out) if out.ndim == 0 else out
