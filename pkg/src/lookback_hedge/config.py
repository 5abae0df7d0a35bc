"""Experiment configuration files and shipped presets.

Configs are INI-style text with explicit units in comments and a schema
version; see data/presets/ for the shipped experiments.  A preset name can
be used anywhere a config path can.
"""

from __future__ import annotations

import configparser
from importlib import resources

from .instruments import InstrumentVariant
from .market import BsmParams, MjdParams
from .training import ExperimentConfig, Penalty

__all__ = ["ConfigError", "load_config", "load_preset", "list_presets", "config_to_dict", "write_config"]

SCHEMA_VERSION = 1

_PENALTY_NAMES = {"mse": Penalty.MSE, "smse": Penalty.SMSE}


class ConfigError(Exception):
    """Malformed or inconsistent experiment configuration."""


def _get(section, key, cast, where):
    if key not in section:
        raise ConfigError(f"missing key '{key}' in [{where}]")
    try:
        return cast(section[key])
    except ValueError as exc:
        raise ConfigError(f"bad value for '{key}' in [{where}]: {exc}") from exc


def _parse(parser: configparser.ConfigParser, source: str) -> ExperimentConfig:
    for name in ("experiment", "market", "hedge", "training"):
        if name not in parser:
            raise ConfigError(f"{source}: missing [{name}] section")
    exp = parser["experiment"]
    version = _get(exp, "schema_version", int, "experiment")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"{source}: unsupported schema_version {version}")
    mkt = parser["market"]
    dynamics = _get(mkt, "dynamics", str, "market").strip().lower()
    if dynamics == "bsm":
        model = BsmParams(mu=_get(mkt, "mu", float, "market"), sigma=_get(mkt, "sigma", float, "market"))
    elif dynamics == "mjd":
        model = MjdParams(
            alpha=_get(mkt, "alpha", float, "market"),
            sigma=_get(mkt, "sigma", float, "market"),
            lam=_get(mkt, "lambda", float, "market"),
            mu_j=_get(mkt, "mu_j", float, "market"),
            sigma_j=_get(mkt, "sigma_j", float, "market"),
            gamma=_get(mkt, "gamma", float, "market"),
        )
    else:
        raise ConfigError(f"{source}: unknown dynamics '{dynamics}'")
    hedge = parser["hedge"]
    instruments = _get(hedge, "instruments", str, "hedge").strip().lower()
    try:
        variant = InstrumentVariant(instruments)
    except ValueError:
        raise ConfigError(f"{source}: unknown instrument set '{instruments}'") from None
    penalty_name = _get(hedge, "penalty", str, "hedge").strip().lower()
    if penalty_name not in _PENALTY_NAMES:
        raise ConfigError(f"{source}: unknown penalty '{penalty_name}'")
    trn = parser["training"]
    try:
        return ExperimentConfig(
            name=_get(exp, "name", str, "experiment").strip(),
            model=model,
            r=_get(mkt, "r", float, "market"),
            s0=_get(mkt, "s0", float, "market"),
            instruments=variant,
            penalty=_PENALTY_NAMES[penalty_name],
            v0=_get(hedge, "v0", float, "hedge"),
            horizon_years=_get(hedge, "horizon_years", int, "hedge"),
            train_paths=_get(trn, "train_paths", int, "training"),
            valid_paths=_get(trn, "valid_paths", int, "training"),
            test_paths=_get(trn, "test_paths", int, "training"),
            epochs=_get(trn, "epochs", int, "training"),
            batch_size=_get(trn, "batch_size", int, "training"),
            learning_rate=_get(trn, "learning_rate", float, "training"),
            data_seed=_get(trn, "data_seed", int, "training"),
            init_seed=_get(trn, "init_seed", int, "training"),
        )
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def load_config(path) -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file: {path}")
    return _parse(parser, str(path))


def list_presets() -> list[str]:
    folder = resources.files("lookback_hedge.data").joinpath("presets")
    return sorted(p.name[: -len(".ini")] for p in folder.iterdir() if p.name.endswith(".ini"))


def load_preset(name: str) -> ExperimentConfig:
    folder = resources.files("lookback_hedge.data").joinpath("presets")
    candidate = folder.joinpath(f"{name}.ini")
    if not candidate.is_file():
        raise ConfigError(f"unknown preset '{name}'; available: {', '.join(list_presets())}")
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    parser.read_string(candidate.read_text())
    return _parse(parser, f"preset:{name}")


def config_to_dict(config: ExperimentConfig) -> dict:
    """Flat snapshot of every resolved setting (for manifests)."""
    out = {
        "schema_version": SCHEMA_VERSION,
        "name": config.name,
        "dynamics": config.dynamics,
        "r": config.r,
        "s0": config.s0,
        "instruments": config.instruments.value,
        "penalty": config.penalty.value,
        "v0": config.v0,
        "horizon_years": config.horizon_years,
        "n_steps": config.n_steps,
        "train_paths": config.train_paths,
        "valid_paths": config.valid_paths,
        "test_paths": config.test_paths,
        "epochs": config.epochs,
        "batch_size": config.batch_size,
        "learning_rate": config.learning_rate,
        "data_seed": config.data_seed,
        "init_seed": config.init_seed,
    }
    if isinstance(config.model, BsmParams):
        out["mu"] = config.model.mu
        out["sigma"] = config.model.sigma
    else:
        out.update(
            alpha=config.model.alpha,
            sigma=config.model.sigma,
            lam=config.model.lam,
            mu_j=config.model.mu_j,
            sigma_j=config.model.sigma_j,
            gamma=config.model.gamma,
        )
    return out


def write_config(config: ExperimentConfig, path) -> None:
    """Emit a config back to INI form (round-trips through load_config)."""
    if isinstance(config.model, BsmParams):
        market_lines = [
            "dynamics = bsm",
            f"mu = {config.model.mu!r}        ; yearly drift under the physical measure (1/yr)",
            f"sigma = {config.model.sigma!r}  ; yearly volatility (1/sqrt(yr))",
        ]
    else:
        market_lines = [
            "dynamics = mjd",
            f"alpha = {config.model.alpha!r}      ; yearly drift under the physical measure (1/yr)",
            f"sigma = {config.model.sigma!r}      ; yearly diffusive volatility (1/sqrt(yr))",
            f"lambda = {config.model.lam!r}       ; yearly jump intensity (count/yr)",
            f"mu_j = {config.model.mu_j!r}        ; mean log-jump size",
            f"sigma_j = {config.model.sigma_j!r}  ; log-jump volatility",
            f"gamma = {config.model.gamma!r}      ; jump risk-aversion (<= 1)",
        ]
    market_lines += [
        f"r = {config.r!r}    ; continuously compounded risk-free rate (1/yr)",
        f"s0 = {config.s0!r}  ; initial spot (currency)",
    ]
    text = "\n".join(
        [
            "[experiment]",
            f"schema_version = {SCHEMA_VERSION}",
            f"name = {config.name}",
            "",
            "[market]",
            *market_lines,
            "",
            "[hedge]",
            f"instruments = {config.instruments.value}  ; stock_yearly | stock_monthly | two_options | six_options",
            f"penalty = {config.penalty.value}          ; mse | smse",
            f"v0 = {config.v0!r}            ; initial hedging capital (currency)",
            f"horizon_years = {config.horizon_years}",
            "",
            "[training]",
            f"train_paths = {config.train_paths}",
            f"valid_paths = {config.valid_paths}",
            f"test_paths = {config.test_paths}",
            f"epochs = {config.epochs}",
            f"batch_size = {config.batch_size}",
            f"learning_rate = {config.learning_rate!r}",
            f"data_seed = {config.data_seed}",
            f"init_seed = {config.init_seed}",
            "",
        ]
    )
    with open(path, "w") as fh:
        fh.write(text)
