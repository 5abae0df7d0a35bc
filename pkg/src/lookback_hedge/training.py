"""End-to-end policy optimization.

Generates train/validation/test path sets from disjoint seed streams, rolls
the LSTM policy through the self-financing accounting, evaluates the
quadratic (MSE) or semi-quadratic (SMSE) penalty on terminal hedging
errors, and runs mini-batch Adam with per-epoch validation selection.

The rollout is differentiated end to end: the hedging-portfolio value is a
feature of the policy at every step, so its gradient path (through both the
bank-growth recursion and the value feature) is part of the reverse sweep.

Feature vectors per rebalance date, in order:

    stock menus:   [log S, log Z, V/V0]
    option menus:  [log S, log P_1 .. log P_D, log Z, V/V0]

with Z the anniversary running maximum and V the pre-rebalance portfolio
value.  The V/V0 component is always last.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Union

import numpy as np

from . import market, portfolio
from .instruments import InstrumentSet, InstrumentVariant, OptionKind, unit_quotes
from .market import BsmParams, Measure, MjdParams, PathSet
from .neural import (
    AdamState,
    LstmConfig,
    PolicyParams,
    StackWorkspace,
    Tape,
    adam_step,
    cell_backward,
    glorot_init,
    stack_step,
    zeros_like_params,
)
from .portfolio import HedgeOutcome
from .pricing import BsmPricer, MertonPricer

__all__ = [
    "Penalty",
    "ExperimentConfig",
    "TrainReport",
    "TrainingDiverged",
    "HIDDEN_WIDTHS",
    "loss",
    "loss_gradient",
    "build_features",
    "dataset_seed",
    "simulate_dataset",
    "HedgingEngine",
    "rollout",
    "evaluate",
    "train",
]

HIDDEN_WIDTHS = (24, 24)  # two cells, 24 neurons each, for every menu

SHUFFLE_STREAM = 200  # Philox substream for epoch mini-batch shuffling

_DATASET_ROLES = {"train": 1, "valid": 2, "test": 3}

_EVAL_CHUNK = 8192


class Penalty(Enum):
    """Terminal hedging-error penalty: quadratic or losses-only quadratic."""

    MSE = "mse"
    SMSE = "smse"


def loss(errors, penalty: Penalty) -> float:
    """Mean penalty of a batch of terminal hedging errors."""
    errors = np.asarray(errors, dtype=float)
    if errors.size == 0:
        raise ValueError("empty error batch")
    if penalty is Penalty.MSE:
        return float(np.mean(errors ** 2))
    return float(np.mean(np.square(np.maximum(errors, 0.0))))


def loss_gradient(errors, penalty: Penalty) -> np.ndarray:
    """d(loss)/d(errors); the SMSE subgradient at exactly zero error is 0."""
    errors = np.asarray(errors, dtype=float)
    if errors.size == 0:
        raise ValueError("empty error batch")
    if penalty is Penalty.MSE:
        return 2.0 * errors / errors.size
    return np.where(errors > 0.0, 2.0 * errors, 0.0) / errors.size


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one hedging experiment needs, seeds included."""

    name: str
    model: Union[BsmParams, MjdParams]
    r: float
    s0: float
    instruments: InstrumentVariant
    penalty: Penalty
    v0: float
    horizon_years: int
    train_paths: int
    valid_paths: int
    test_paths: int
    epochs: int
    batch_size: int
    learning_rate: float
    data_seed: int
    init_seed: int

    def __post_init__(self):
        if not math.isfinite(self.v0) or self.v0 <= 0:
            raise ValueError("v0 must be positive and finite")
        if self.s0 <= 0:
            raise ValueError("s0 must be positive")
        if min(self.train_paths, self.valid_paths, self.test_paths) < 1:
            raise ValueError("path budgets must be positive")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if self.train_paths % self.batch_size != 0:
            raise ValueError("batch_size must divide train_paths")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if int(self.horizon_years) != self.horizon_years or self.horizon_years < 1:
            raise ValueError("horizon_years must be a positive integer")

    @property
    def dynamics(self) -> str:
        return "bsm" if isinstance(self.model, BsmParams) else "mjd"

    @property
    def instrument_set(self) -> InstrumentSet:
        return InstrumentSet(self.instruments)

    @property
    def n_steps(self) -> int:
        return self.instrument_set.rebalance_steps(self.horizon_years)

    @property
    def dt(self) -> float:
        return self.horizon_years / self.n_steps

    def lstm_config(self) -> LstmConfig:
        iset = self.instrument_set
        d_in = 3 if iset.trades_stock else iset.n_options + 3
        return LstmConfig(d_in=d_in, d_out=iset.n_decisions, widths=HIDDEN_WIDTHS)

    def pricer(self):
        if isinstance(self.model, BsmParams):
            return BsmPricer(r=self.r, sigma=self.model.sigma)
        return MertonPricer.from_physical(self.model, self.r)


@dataclass
class TrainReport:
    """Training trace: losses per epoch and the validation-selected policy.

    valid_losses[0] is the validation loss of the freshly initialized
    parameters; entry e >= 1 follows epoch e.  selected_epoch indexes that
    list and attains its minimum.
    """

    train_losses: list = field(default_factory=list)
    valid_losses: list = field(default_factory=list)
    selected_epoch: int = 0
    params: Optional[PolicyParams] = None
    wall_clock_seconds: float = 0.0


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; carries the last finite checkpoint."""

    def __init__(self, message: str, report: TrainReport):
        super().__init__(message)
        self.report = report


def dataset_seed(data_seed: int, role: str) -> int:
    """Disjoint per-role seeds; streams never overlap within an experiment."""
    return data_seed * 4 + _DATASET_ROLES[role]


def simulate_dataset(config: ExperimentConfig, role: str) -> PathSet:
    n_paths = {
        "train": config.train_paths,
        "valid": config.valid_paths,
        "test": config.test_paths,
    }[role]
    return market.simulate_paths(
        config.model,
        Measure.PHYSICAL,
        n_paths=n_paths,
        n_steps=config.n_steps,
        horizon_years=config.horizon_years,
        s0=config.s0,
        seed=dataset_seed(config.data_seed, role),
    )


def build_features(iset: InstrumentSet, spot, running_max, value, v0, unit_prices=None) -> np.ndarray:
    """Feature vector for one rebalance date (see module docstring for order)."""
    if v0 <= 0:
        raise ValueError("v0 must be positive")
    if spot <= 0 or running_max <= 0:
        raise ValueError("prices must be positive")
    if iset.trades_stock:
        return np.array([math.log(spot), math.log(running_max), value / v0])
    prices = np.asarray(unit_prices, dtype=float) * spot
    return np.concatenate(
        [[math.log(spot)], np.log(prices), [math.log(running_max)], [value / v0]]
    )


class HedgingEngine:
    """Rolls a policy through simulated markets; forward or with gradients.

    Option quotes exploit price homogeneity: with strikes proportional to
    spot, begin prices are (unit price per moneyness) * spot and deltas are
    spot-independent, so the menu is priced once at construction.
    """

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.iset = config.instrument_set
        self.growth = math.exp(config.r * config.dt)
        self.v0 = config.v0
        lstm = config.lstm_config()
        self.d_in = lstm.d_in
        self.d_out = lstm.d_out
        if self.iset.trades_stock:
            self.unit_prices = np.zeros(0)
            self.unit_deltas = np.ones(1)
            self.log_unit_prices = np.zeros(0)
            self.moneyness = np.zeros(0)
            self.is_call = np.zeros(0, dtype=bool)
        else:
            self.unit_prices, self.unit_deltas = unit_quotes(self.iset, config.pricer())
            self.log_unit_prices = np.log(self.unit_prices)
            self.moneyness = np.array([s.moneyness for s in self.iset.options])
            self.is_call = np.array([s.kind is OptionKind.CALL for s in self.iset.options])
        self._workspace = None

    def _tape_workspace(self, lstm_config, batch, n_steps) -> StackWorkspace:
        ws = self._workspace
        if ws is None or ws.batch != batch or ws.n_steps != n_steps:
            ws = StackWorkspace(lstm_config, batch, n_steps)
            self._workspace = ws
        return ws

    # -- period plumbing ---------------------------------------------------

    def _features(self, out, log_s, log_z, value):
        # feature-major (d_in, B) to match the network's hot-path layout
        out[0] = log_s
        if not self.iset.trades_stock:
            out[1 : 1 + self.iset.n_options] = log_s[None, :] + self.log_unit_prices[:, None]
        out[-2] = log_z
        out[-1] = value / self.v0
        return out

    def _period_legs(self, s_begin, s_end):
        """Begin prices and end values of the traded assets, (B, k) each."""
        if self.iset.trades_stock:
            return s_begin[:, None], s_end[:, None]
        strikes = s_begin[:, None] * self.moneyness
        diff = s_end[:, None] - strikes
        payoff = np.where(self.is_call, np.maximum(diff, 0.0), np.maximum(-diff, 0.0))
        return s_begin[:, None] * self.unit_prices, payoff

    # -- forward -----------------------------------------------------------

    def _forward(self, params: PolicyParams, spot, zmax, want_tape=False, record=False):
        batch, n_cols = spot.shape
        n_steps = n_cols - 1
        log_s = np.log(spot[:, :n_steps])
        log_z = np.log(zmax[:, :n_steps])
        bank = np.exp(self.config.r * self.config.dt * np.arange(n_steps + 1))
        workspace = self._tape_workspace(params.config, batch, n_steps) if want_tape else None
        if workspace is not None:
            hs = list(workspace.h0)
            cs = list(workspace.c0)
        else:
            hs = [np.zeros((d, batch)) for d in params.config.widths]
            cs = [np.zeros((d, batch)) for d in params.config.widths]
        value = np.full(batch, self.v0)
        tape = Tape(batch=batch) if want_tape else None
        trade_gains = [] if want_tape else None
        features = np.empty((self.d_in, batch))
        value_path = positions = delta_path = None
        if record:
            value_path = np.empty((batch, n_steps + 1))
            value_path[:, 0] = self.v0
            positions = np.empty((batch, n_steps, self.d_out))
            delta_path = np.empty((batch, n_steps))
        for n in range(n_steps):
            self._features(features, log_s[:, n], log_z[:, n], value)
            slots = None if workspace is None else workspace.slots(n)
            y = stack_step(params, features, hs, cs, tape, slots)  # (d_out, B)
            begin, end = self._period_legs(spot[:, n], spot[:, n + 1])
            units = portfolio.bank_units(value, y.T, begin, bank[n])
            value = portfolio.settle_value(y.T, end, units, bank[n + 1])
            if want_tape:
                trade_gains.append(end - self.growth * begin)
            if record:
                positions[:, n] = y.T
                value_path[:, n + 1] = value
                if self.iset.trades_stock:
                    delta_path[:, n] = y[0]
                else:
                    delta_path[:, n] = self.unit_deltas @ y
        payoff = np.maximum(zmax[:, -1] - spot[:, -1], 0.0)
        errors = payoff - value
        return errors, value_path, positions, delta_path, tape, trade_gains

    def outcome(self, params: PolicyParams, spot, zmax) -> HedgeOutcome:
        errors, value_path, positions, delta_path, _, _ = self._forward(
            params, spot, zmax, record=True
        )
        return HedgeOutcome(
            terminal_error=errors,
            value_path=value_path,
            delta_path=delta_path,
            positions=positions,
        )

    def penalty_value(self, params: PolicyParams, spot, zmax, penalty: Penalty) -> float:
        """Mean penalty over a path set, evaluated in forward-only chunks."""
        n = spot.shape[0]
        total = 0.0
        for start in range(0, n, _EVAL_CHUNK):
            stop = min(start + _EVAL_CHUNK, n)
            errors, *_ = self._forward(params, spot[start:stop], zmax[start:stop])
            total += loss(errors, penalty) * (stop - start)
        return total / n

    # -- backward ----------------------------------------------------------

    def loss_and_grads(self, params: PolicyParams, spot, zmax, penalty: Penalty):
        """Penalty value and its exact gradient w.r.t. every parameter."""
        errors, _, _, _, tape, trade_gains = self._forward(params, spot, zmax, want_tape=True)
        batch_loss = loss(errors, penalty)
        grads = zeros_like_params(params.config)
        g_value = -loss_gradient(errors, penalty)  # d(loss)/dV_T
        widths = params.config.widths
        gh = [np.zeros((d, tape.batch)) for d in widths]
        gc = [np.zeros((d, tape.batch)) for d in widths]
        for n in reversed(range(len(tape.steps))):
            caches, h_top = tape.steps[n]
            gy = trade_gains[n].T * g_value[None, :]  # (d_out, B)
            g_value = g_value * self.growth
            grads.w_y += gy @ h_top.T
            grads.b_y += gy.sum(axis=1)
            g_into = params.w_y.T @ gy
            for j in reversed(range(len(params.cells))):
                gx, gh_prev, gc_prev = cell_backward(
                    params.cells[j], caches[j], gh[j] + g_into, gc[j], grads.cells[j]
                )
                gh[j] = gh_prev
                gc[j] = gc_prev
                g_into = gx
            # portfolio value re-enters the features as the last component
            g_value = g_value + g_into[-1] / self.v0
        return batch_loss, grads


def _check_paths(config: ExperimentConfig, paths: PathSet):
    if paths.n_steps != config.n_steps:
        raise ValueError("path grid does not match the configured rebalance schedule")


def rollout(params: PolicyParams, paths: PathSet, config: ExperimentConfig) -> HedgeOutcome:
    """Run a policy over a path set, recording values, positions and deltas."""
    _check_paths(config, paths)
    engine = HedgingEngine(config)
    outcome = engine.outcome(params, paths.spot_begin, paths.running_max)
    if not np.all(np.isfinite(outcome.terminal_error)):
        raise TrainingDiverged("non-finite terminal error in rollout", TrainReport(params=params))
    return outcome


def evaluate(params: PolicyParams, paths: PathSet, config: ExperimentConfig) -> HedgeOutcome:
    """Out-of-sample evaluation; identical mechanics to the training rollout."""
    return rollout(params, paths, config)


def train(config: ExperimentConfig, log=None) -> TrainReport:
    """Mini-batch Adam over the training set with validation-epoch selection.

    The reported parameters are the epoch-end snapshot (the initial
    parameters count as epoch 0) with the lowest validation penalty.
    Raises TrainingDiverged, carrying the last finite checkpoint, if a
    mini-batch loss stops being finite.
    """
    t_start = time.perf_counter()
    engine = HedgingEngine(config)
    train_set = simulate_dataset(config, "train")
    valid_set = simulate_dataset(config, "valid")
    params = glorot_init(config.lstm_config(), config.init_seed)
    adam = AdamState.for_params(params, config.learning_rate)
    report = TrainReport()

    valid0 = engine.penalty_value(params, valid_set.spot_begin, valid_set.running_max, config.penalty)
    report.valid_losses.append(valid0)
    best_loss, best_epoch, best_params = valid0, 0, params.copy()

    shuffle = np.random.Generator(
        np.random.Philox(
            key=np.array([np.uint64(config.init_seed), np.uint64(SHUFFLE_STREAM)], dtype=np.uint64)
        )
    )
    for epoch in range(1, config.epochs + 1):
        order = shuffle.permutation(config.train_paths)
        batch_losses = []
        for start in range(0, config.train_paths, config.batch_size):
            rows = order[start : start + config.batch_size]
            spot = train_set.spot_begin[rows]
            zmax = train_set.running_max[rows]
            batch_loss, grads = engine.loss_and_grads(params, spot, zmax, config.penalty)
            if not math.isfinite(batch_loss):
                report.selected_epoch = best_epoch
                report.params = best_params
                report.wall_clock_seconds = time.perf_counter() - t_start
                raise TrainingDiverged(
                    f"training loss diverged in epoch {epoch}", report
                )
            adam_step(params, grads, adam)
            batch_losses.append(batch_loss)
        report.train_losses.append(float(np.mean(batch_losses)))
        valid_loss = engine.penalty_value(
            params, valid_set.spot_begin, valid_set.running_max, config.penalty
        )
        report.valid_losses.append(valid_loss)
        if valid_loss < best_loss:
            best_loss, best_epoch, best_params = valid_loss, epoch, params.copy()
        if log is not None:
            log(epoch, report.train_losses[-1], valid_loss)
    report.selected_epoch = best_epoch
    report.params = best_params
    report.wall_clock_seconds = time.perf_counter() - t_start
    return report
