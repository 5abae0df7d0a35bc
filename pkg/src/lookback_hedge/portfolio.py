"""Self-financing portfolio accounting.

The hedger chooses risky positions at the start of each period; the
risk-free position is never chosen, it is implied by the self-financing
constraint: whatever value is not in risky assets sits in the bank account
B_t = exp(r*t).  Settling a period values the risky legs at their
end-of-period prices (payoffs for expiring options) and grows the bank leg.

Single-path state transitions live here next to their batched counterparts
so that every consumer shares one set of accounting formulas.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .instruments import PeriodQuotes

__all__ = [
    "PortfolioState",
    "HedgeOutcome",
    "rebalance",
    "settle_period",
    "portfolio_delta",
    "bank_units",
    "settle_value",
    "self_financing_gap",
]


@dataclass(frozen=True)
class PortfolioState:
    """Portfolio right after a rebalance (or at inception, all in the bank)."""

    value: float
    bank_units: float
    risky_positions: np.ndarray
    time_index: int

    @classmethod
    def initial(cls, v0: float, n_risky: int) -> "PortfolioState":
        # all-bank inception: bank price is 1 at time 0
        return cls(value=v0, bank_units=v0, risky_positions=np.zeros(n_risky), time_index=0)


@dataclass
class HedgeOutcome:
    """Batch result of running a strategy to maturity.

    terminal_error is payoff minus terminal portfolio value (positive =
    hedging loss).  delta_path holds the portfolio delta at the start of
    each of the N periods; positions the risky decisions taken there.
    """

    terminal_error: np.ndarray
    value_path: np.ndarray
    delta_path: np.ndarray
    positions: np.ndarray


def rebalance(state: PortfolioState, new_risky_positions, quotes: PeriodQuotes, r: float, dt: float) -> PortfolioState:
    """Move to new risky positions; the bank position absorbs the residual."""
    positions = np.asarray(new_risky_positions, dtype=float)
    if positions.shape != quotes.begin_prices.shape:
        raise ValueError("positions must match the quoted asset vector")
    if not np.all(np.isfinite(positions)) or not math.isfinite(state.value):
        raise ValueError("non-finite positions or portfolio value (diverged policy?)")
    bank_price = math.exp(r * dt * state.time_index)
    units = (state.value - float(positions @ quotes.begin_prices)) / bank_price
    return replace(state, bank_units=units, risky_positions=positions)


def settle_period(state: PortfolioState, quotes: PeriodQuotes, r: float, dt: float) -> PortfolioState:
    """Value the portfolio at period end, before the next rebalance."""
    bank_price_next = math.exp(r * dt * (state.time_index + 1))
    value = float(state.risky_positions @ quotes.end_values) + state.bank_units * bank_price_next
    return replace(state, value=value, time_index=state.time_index + 1)


def portfolio_delta(state: PortfolioState, quotes: PeriodQuotes) -> float:
    """Sensitivity of the portfolio value to the underlying price."""
    return float(state.risky_positions @ quotes.deltas)


# ---------------------------------------------------------------------------
# Batched counterparts (same formulas, vectorized over paths)
# ---------------------------------------------------------------------------

def bank_units(value, positions, traded_begin_prices, bank_price):
    """Bank units implied by the self-financing constraint.

    positions/traded_begin_prices cover only the assets actually traded
    (shape (..., k)); untraded assets hold zero and drop out.
    """
    return (value - np.einsum("...k,...k->...", positions, traded_begin_prices)) / bank_price


def settle_value(positions, traded_end_values, units, bank_price_next):
    """Period-end portfolio value given positions and the bank residual."""
    return np.einsum("...k,...k->...", positions, traded_end_values) + units * bank_price_next


def self_financing_gap(value_path, positions, begin_prices, end_values, r: float, dt: float) -> float:
    """Largest relative violation of V_t = B_t * (V_0 + G_t) along a batch.

    value_path: (B, N+1); positions/begin_prices/end_values: (B, N, k) with
    positions[:, n] held over period n.  G is the discounted gain process
    accumulated from the traded legs.
    """
    value_path = np.asarray(value_path, dtype=float)
    n_steps = positions.shape[1]
    times = np.arange(n_steps + 1) * dt
    disc = np.exp(-r * times)
    gain_increments = np.einsum(
        "bnk,bnk->bn",
        positions,
        end_values * disc[1:, None] - begin_prices * disc[:-1, None],
    )
    gain = np.concatenate(
        [np.zeros((value_path.shape[0], 1)), np.cumsum(gain_increments, axis=1)], axis=1
    )
    implied = (value_path[:, :1] + gain) / disc[None, :]
    gap = np.abs(value_path - implied) / np.maximum(1.0, np.abs(value_path))
    return float(gap.max())
