"""Hedging-error statistics and equity-exposure analytics.

Sign convention: a positive hedging error is a loss (payoff exceeded the
portfolio), so upper-tail statistics quantify downside risk.

Empirical quantile convention, fixed so every consumer agrees: VaR at level
alpha over n observations is the ascending order statistic of rank
ceil(alpha * n); CVaR averages every observation >= that order statistic.
Skewness is the population-standardized third central moment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

__all__ = [
    "HedgeStats",
    "ExposureStats",
    "hedge_stats",
    "empirical_var",
    "empirical_cvar",
    "average_exposure",
    "ComparisonRow",
    "report",
]

STAT_COLUMNS = ("mean", "rmse", "semi_rmse", "var_95", "var_99", "cvar_95", "cvar_99", "skew")


@dataclass(frozen=True)
class HedgeStats:
    """Summary statistics of a terminal hedging-error sample."""

    mean: float
    rmse: float
    semi_rmse: float
    var_95: float
    var_99: float
    cvar_95: float
    cvar_99: float
    skew: float

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class ExposureStats:
    """Average portfolio delta over all paths and rebalance dates."""

    avg_exposure: float


def empirical_var(sorted_errors: np.ndarray, alpha: float) -> float:
    """Ascending order statistic of rank ceil(alpha * n) (1-based)."""
    n = sorted_errors.shape[0]
    rank = int(math.ceil(alpha * n))
    rank = min(max(rank, 1), n)
    return float(sorted_errors[rank - 1])


def empirical_cvar(sorted_errors: np.ndarray, alpha: float) -> float:
    """Mean of all errors at or beyond the empirical VaR."""
    var = empirical_var(sorted_errors, alpha)
    return float(sorted_errors[sorted_errors >= var].mean())


def hedge_stats(errors) -> HedgeStats:
    """Compute the full statistic row for a sample of hedging errors."""
    errors = np.asarray(errors, dtype=float)
    if errors.ndim != 1 or errors.shape[0] < 2:
        raise ValueError("need a flat sample of at least two errors")
    srt = np.sort(errors)
    mean = float(errors.mean())
    rmse = float(np.sqrt(np.mean(errors ** 2)))
    semi_rmse = float(np.sqrt(np.mean(np.square(np.maximum(errors, 0.0)))))
    centered = errors - mean
    m2 = float(np.mean(centered ** 2))
    m3 = float(np.mean(centered ** 3))
    skew = m3 / m2 ** 1.5 if m2 > 0 else 0.0
    return HedgeStats(
        mean=mean,
        rmse=rmse,
        semi_rmse=semi_rmse,
        var_95=empirical_var(srt, 0.95),
        var_99=empirical_var(srt, 0.99),
        cvar_95=empirical_cvar(srt, 0.95),
        cvar_99=empirical_cvar(srt, 0.99),
        skew=skew,
    )


def average_exposure(delta_paths) -> ExposureStats:
    """Grand mean of the portfolio delta over paths and rebalance dates."""
    delta_paths = np.asarray(delta_paths, dtype=float)
    if delta_paths.size == 0:
        raise ValueError("empty delta-path matrix")
    return ExposureStats(avg_exposure=float(delta_paths.mean()))


@dataclass(frozen=True)
class ComparisonRow:
    """One experiment's computed statistics next to the shipped references."""

    experiment: str
    statistic: str
    computed: float | None
    reference: float | None

    @property
    def deviation_pct(self) -> float | None:
        if self.computed is None or self.reference is None or self.reference == 0:
            return None
        return 100.0 * (self.computed - self.reference) / abs(self.reference)


def report(computed: dict, references: dict) -> list[ComparisonRow]:
    """Align computed statistic rows with reference rows by experiment key.

    Both arguments map experiment key -> {statistic -> value}.  Computed
    experiments missing from the references appear with blank reference
    cells (and vice versa); a computed key whose reference row exists but
    lacks a statistic simply omits that cell.
    """
    if not isinstance(computed, dict) or not isinstance(references, dict):
        raise TypeError("computed and references must map experiment -> stats")
    rows: list[ComparisonRow] = []
    for key in sorted(set(computed) | set(references)):
        got = computed.get(key)
        ref = references.get(key)
        stats = sorted(set(got or {}) | set(ref or {}))
        for stat in stats:
            rows.append(
                ComparisonRow(
                    experiment=key,
                    statistic=stat,
                    computed=None if got is None else got.get(stat),
                    reference=None if ref is None else ref.get(stat),
                )
            )
    return rows
