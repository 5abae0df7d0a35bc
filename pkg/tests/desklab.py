"""Shared desk-scale training runs for the test suite.

Training 16 reduced-budget experiments dominates the suite's runtime, so
results are computed once per session, two at a time in worker processes
(the box has two cores), and memoized for every test that needs them.
"""

import os

os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")

import multiprocessing as mp
from dataclasses import dataclass

from lookback_hedge import metrics, neural, training
from lookback_hedge.config import load_preset

DYNAMICS = ("bsm", "mjd")
INSTRUMENTS = ("stock_yearly", "stock_monthly", "two_options", "six_options")
METHODS = ("qdh", "sqdh")


@dataclass(frozen=True)
class DeskResult:
    preset: str
    stats: metrics.HedgeStats
    exposure: float
    baseline: metrics.HedgeStats
    selected_epoch: int
    init_valid_loss: float
    best_valid_loss: float
    wall_clock_seconds: float


_RESULTS: dict[str, DeskResult] = {}


def run_preset(preset: str) -> DeskResult:
    cfg = load_preset(preset)
    report = training.train(cfg)
    test_set = training.simulate_dataset(cfg, "test")
    outcome = training.evaluate(report.params, test_set, cfg)
    stats = metrics.hedge_stats(outcome.terminal_error)
    exposure = metrics.average_exposure(outcome.delta_path).avg_exposure
    zero = neural.zeros_like_params(cfg.lstm_config())
    baseline = metrics.hedge_stats(training.evaluate(zero, test_set, cfg).terminal_error)
    return DeskResult(
        preset=preset,
        stats=stats,
        exposure=exposure,
        baseline=baseline,
        selected_epoch=report.selected_epoch,
        init_valid_loss=report.valid_losses[0],
        best_valid_loss=min(report.valid_losses),
        wall_clock_seconds=report.wall_clock_seconds,
    )


def get_results(presets) -> dict[str, DeskResult]:
    """Memoized desk results; missing ones are trained two at a time."""
    missing = [p for p in presets if p not in _RESULTS]
    if len(missing) == 1:
        _RESULTS[missing[0]] = run_preset(missing[0])
    elif missing:
        ctx = mp.get_context("spawn")
        with ctx.Pool(processes=2) as pool:
            for preset, result in zip(missing, pool.map(run_preset, missing)):
                _RESULTS[preset] = result
    return {p: _RESULTS[p] for p in presets}


def desk_preset(dynamics: str, instruments: str, method: str) -> str:
    return f"desk_{dynamics}_{instruments}_{method}"


def all_desk_presets() -> list[str]:
    # stock_monthly runs are ~8x the cost of the rest; interleave them so the
    # two-process pool keeps both cores busy to the end
    order = []
    monthly = []
    for dyn in DYNAMICS:
        for inst in INSTRUMENTS:
            for method in METHODS:
                (monthly if inst == "stock_monthly" else order).append(
                    desk_preset(dyn, inst, method)
                )
    return monthly + order
