"""Command-line surface: simulate | price | train | evaluate | report.

Every run is driven by a config file or a shipped preset and leaves a JSON
manifest capturing the resolved configuration, seeds and artifact paths, so
a finished run can be reproduced bit for bit in deterministic mode.

Exit codes: 0 success, 2 configuration error, 3 training divergence,
4 I/O failure.

Threading contract: gradient reductions and statistics are fixed-order
NumPy reductions.  In deterministic mode (the default) the BLAS is pinned
to one thread as well, which makes every artifact bit-reproducible;
``--no-deterministic`` lets the BLAS use ``--threads`` threads.
"""

from __future__ import annotations

import json
import os
import sys
import time

EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_IO = 4


def _apply_thread_flags(argv) -> None:
    """Pin BLAS thread pools before NumPy is imported."""
    threads = 1
    deterministic = True
    for i, arg in enumerate(argv):
        if arg == "--threads" and i + 1 < len(argv):
            try:
                threads = max(1, int(argv[i + 1]))
            except ValueError:
                pass
        elif arg.startswith("--threads="):
            try:
                threads = max(1, int(arg.split("=", 1)[1]))
            except ValueError:
                pass
        elif arg == "--no-deterministic":
            deterministic = False
    n = "1" if deterministic else str(threads)
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, n)


def main() -> None:
    _apply_thread_flags(sys.argv[1:])
    from .config import ConfigError
    from .training import TrainingDiverged

    try:
        cli.main(args=sys.argv[1:], standalone_mode=False)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        sys.exit(EXIT_CONFIG)
    except TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        sys.exit(EXIT_DIVERGED)
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        sys.exit(EXIT_IO)
    except _Click.ClickException as exc:
        exc.show()
        sys.exit(EXIT_CONFIG)
    except _Click.Abort:
        sys.exit(1)


import click as _Click  # noqa: E402  (kept after the thread-flag shim; click never imports numpy)


def _load(config_path, preset):
    from .config import ConfigError, load_config, load_preset

    if (config_path is None) == (preset is None):
        raise ConfigError("exactly one of --config or --preset is required")
    return load_config(config_path) if config_path else load_preset(preset)


def _common(fn):
    fn = _Click.option("--config", "config_path", type=_Click.Path(), default=None, help="Config file path.")(fn)
    fn = _Click.option("--preset", default=None, help="Shipped preset name (see `report --list-presets`).")(fn)
    fn = _Click.option("--seed", type=int, default=None, help="Override the data seed.")(fn)
    fn = _Click.option("--out", "out_dir", type=_Click.Path(file_okay=False), default=".", help="Output directory.")(fn)
    fn = _Click.option("--threads", type=int, default=1, show_default=True, help="BLAS threads (non-deterministic mode).")(fn)
    fn = _Click.option(
        "--deterministic/--no-deterministic", default=True, show_default=True, help="Bit-reproducible mode."
    )(fn)
    return fn


def _with_seed(config, seed):
    if seed is None:
        return config
    from dataclasses import replace

    return replace(config, data_seed=seed)


def _manifest(out_dir, config, artifacts, seed, threads, deterministic, extra=None):
    from . import __version__
    from .config import config_to_dict

    manifest = {
        "engine_version": __version__,
        "created_unix": time.time(),
        "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "config": config_to_dict(config),
        "seed_override": seed,
        "threads": threads,
        "deterministic": deterministic,
        "artifacts": artifacts,
    }
    if extra:
        manifest.update(extra)
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return path


@_Click.group()
def cli():
    """Global hedging engine for long-dated lookback guarantees."""


@cli.command()
@_common
@_Click.option("--paths", "n_paths", type=int, default=None, help="Override the number of paths (default: test budget).")
@_Click.option("--measure", type=_Click.Choice(["p", "q"]), default="p", show_default=True, help="Simulation measure.")
def simulate(config_path, preset, seed, out_dir, threads, deterministic, n_paths, measure):
    """Simulate paths, write them as columnar CSV, print summary statistics."""
    import numpy as np

    from . import market

    config = _with_seed(_load(config_path, preset), seed)
    count = n_paths or config.test_paths
    m = market.Measure.PHYSICAL if measure == "p" else market.Measure.RISK_NEUTRAL
    paths = market.simulate_paths(
        config.model, m, count, config.n_steps, config.horizon_years, config.s0,
        config.data_seed, r=config.r,
    )
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, f"{config.name}_paths.csv")
    with open(csv_path, "w") as fh:
        market.export_paths(paths, fh)
    log_returns = np.diff(np.log(paths.spot_begin), axis=1)
    _manifest(out_dir, config, {"paths_csv": csv_path}, seed, threads, deterministic,
              extra={"measure": measure, "n_paths": count})
    _Click.echo(f"paths_csv {csv_path}")
    _Click.echo(f"log_return_mean {log_returns.mean():.10g}")
    _Click.echo(f"log_return_stdev {log_returns.std(ddof=1):.10g}")


@cli.command()
@_common
@_Click.option("--instrument", type=str, default="call:1.0",
               help="'call:M' / 'put:M' for a 1y vanilla at moneyness M, or 'lookback'.")
@_Click.option("--paths", "n_paths", type=int, default=500_000, show_default=True,
               help="Monte Carlo budget for the lookback price.")
def price(config_path, preset, seed, out_dir, threads, deterministic, instrument, n_paths):
    """Price a hedging instrument (or the lookback itself) under the config's Q-dynamics."""
    from . import pricing
    from .config import ConfigError

    config = _with_seed(_load(config_path, preset), seed)
    if instrument.strip().lower() == "lookback":
        quote = pricing.lookback_rn_price(
            config.model, config.r, config.horizon_years, config.s0, n_paths, config.data_seed
        )
        _Click.echo("instrument,price,stderr,n_paths")
        _Click.echo(f"lookback,{quote.price:.6f},{quote.stderr:.6f},{quote.n_paths}")
        return
    try:
        kind_name, moneyness_text = instrument.split(":")
        kind = pricing.OptionKind(kind_name.strip().lower())
        moneyness = float(moneyness_text)
    except ValueError:
        raise ConfigError(f"bad --instrument '{instrument}' (want call:M, put:M or lookback)") from None
    strike = moneyness * config.s0
    quote = config.pricer().price_delta(config.s0, strike, 1.0, kind)
    _Click.echo("instrument,spot,strike,price,delta")
    _Click.echo(f"{instrument},{config.s0:.6f},{strike:.6f},{quote.price:.6f},{quote.delta:.6f}")


@cli.command()
@_common
def train(config_path, preset, seed, out_dir, threads, deterministic):
    """Train a policy; write manifest, parameters, and the per-epoch loss trace."""
    from . import neural, training

    config = _with_seed(_load(config_path, preset), seed)
    os.makedirs(out_dir, exist_ok=True)

    def log(epoch, train_loss, valid_loss):
        _Click.echo(f"epoch {epoch} train_loss {train_loss:.6g} valid_loss {valid_loss:.6g}")

    try:
        report = training.train(config, log=log)
    except training.TrainingDiverged as exc:
        diag_path = os.path.join(out_dir, f"{config.name}_divergence.json")
        checkpoint = exc.report
        with open(diag_path, "w") as fh:
            json.dump(
                {
                    "message": str(exc),
                    "epochs_completed": len(checkpoint.train_losses),
                    "valid_losses": checkpoint.valid_losses,
                },
                fh,
                indent=2,
            )
        if checkpoint.params is not None:
            neural.save_params(checkpoint.params, os.path.join(out_dir, f"{config.name}_params_last_finite.npz"))
        raise
    params_path = os.path.join(out_dir, f"{config.name}_params.npz")
    neural.save_params(report.params, params_path)
    losses_path = os.path.join(out_dir, f"{config.name}_losses.csv")
    with open(losses_path, "w") as fh:
        fh.write("epoch,train_loss,valid_loss\n")
        fh.write(f"0,,{report.valid_losses[0]:.12g}\n")
        for e, (tl, vl) in enumerate(zip(report.train_losses, report.valid_losses[1:]), start=1):
            fh.write(f"{e},{tl:.12g},{vl:.12g}\n")
    manifest_path = _manifest(
        out_dir, config, {"params": params_path, "losses_csv": losses_path}, seed, threads,
        deterministic,
        extra={
            "selected_epoch": report.selected_epoch,
            "best_valid_loss": min(report.valid_losses),
            "wall_clock_seconds": report.wall_clock_seconds,
        },
    )
    _Click.echo(f"selected_epoch {report.selected_epoch}")
    _Click.echo(f"best_valid_loss {min(report.valid_losses):.6g}")
    _Click.echo(f"manifest {manifest_path}")


@cli.command()
@_common
@_Click.option("--params", "params_path", type=_Click.Path(exists=True), required=True,
               help="Trained parameter file (.npz) from `train`.")
def evaluate(config_path, preset, seed, out_dir, threads, deterministic, params_path):
    """Evaluate a trained policy on the test set; write the statistics CSV."""
    from . import metrics, neural, training

    config = _with_seed(_load(config_path, preset), seed)
    params = neural.load_params(params_path)
    test_set = training.simulate_dataset(config, "test")
    outcome = training.evaluate(params, test_set, config)
    stats = metrics.hedge_stats(outcome.terminal_error)
    exposure = metrics.average_exposure(outcome.delta_path)
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, f"{config.name}_stats.csv")
    with open(csv_path, "w") as fh:
        fh.write("experiment,n_paths," + ",".join(metrics.STAT_COLUMNS) + ",avg_exposure\n")
        row = ",".join(f"{getattr(stats, c):.6g}" for c in metrics.STAT_COLUMNS)
        fh.write(f"{config.name},{test_set.n_paths},{row},{exposure.avg_exposure:.6g}\n")
    _manifest(out_dir, config, {"stats_csv": csv_path, "params": params_path}, seed, threads, deterministic)
    _Click.echo(f"stats_csv {csv_path}")
    for column in metrics.STAT_COLUMNS:
        _Click.echo(f"{column} {getattr(stats, column):.6g}")
    _Click.echo(f"avg_exposure {exposure.avg_exposure:.6g}")


@cli.command()
@_Click.option("--runs", "run_csvs", type=_Click.Path(exists=True), multiple=True,
               help="Statistics CSVs from `evaluate` (zero or more).")
@_Click.option("--out", "out_path", type=_Click.Path(), default=None, help="Also write the table as CSV.")
@_Click.option("--list-presets", "show_presets", is_flag=True, help="List shipped preset names and exit.")
def report(run_csvs, out_path, show_presets):
    """Compare run statistics against the shipped reference benchmarks."""
    import csv as _csv

    from . import metrics
    from .reference import reference_stats

    if show_presets:
        from .config import list_presets

        for name in list_presets():
            _Click.echo(name)
        return
    computed: dict = {}
    for path in run_csvs:
        with open(path) as fh:
            for row in _csv.DictReader(fh):
                key = row.pop("experiment")
                computed[key] = {
                    k: float(v) for k, v in row.items() if k != "n_paths" and v not in ("", None)
                }
    rows = metrics.report(computed, reference_stats())
    header = f"{'experiment':34s} {'statistic':13s} {'computed':>12s} {'reference':>12s} {'dev_pct':>9s}"
    _Click.echo(header)
    lines = []
    for row in rows:
        comp = "" if row.computed is None else f"{row.computed:.4g}"
        ref = "" if row.reference is None else f"{row.reference:.4g}"
        dev = "" if row.deviation_pct is None else f"{row.deviation_pct:+.1f}"
        _Click.echo(f"{row.experiment:34s} {row.statistic:13s} {comp:>12s} {ref:>12s} {dev:>9s}")
        lines.append((row.experiment, row.statistic, comp, ref, dev))
    if out_path:
        with open(out_path, "w", newline="") as fh:
            writer = _csv.writer(fh)
            writer.writerow(["experiment", "statistic", "computed", "reference", "deviation_pct"])
            writer.writerows(lines)


if __name__ == "__main__":
    main()
