"""Shipped benchmark constants for the studied hedging experiments.

The packaged CSV carries, per experiment key, the published hedging
statistics this engine is benchmarked against: local-risk-minimization
rows and global (quadratic / semi-quadratic) deep-hedging rows, under both
market dynamics and all four instrument menus.  Keys ending in
``_benchv0`` use the local-risk-minimization initial capital; the rest use
the risk-neutral lookback price as initial capital.
"""

from __future__ import annotations

import csv
from importlib import resources

__all__ = ["load_reference", "reference_stats", "experiment_key"]

_META_FIELDS = ("dynamics", "instruments", "method", "capital_basis")


def experiment_key(dynamics: str, instruments: str, method: str, capital_basis: str = "rn") -> str:
    suffix = "" if capital_basis == "rn" else "_benchv0"
    return f"{dynamics}_{instruments}_{method}{suffix}"


def load_reference() -> dict[str, dict]:
    """All shipped rows: experiment key -> {column -> float | str}."""
    text = resources.files("lookback_hedge.data").joinpath("reference_tables.csv").read_text()
    rows: dict[str, dict] = {}
    for record in csv.DictReader(text.splitlines()):
        key = record.pop("experiment")
        parsed = {}
        for column, value in record.items():
            if value == "":
                continue
            parsed[column] = value if column in _META_FIELDS else float(value)
        rows[key] = parsed
    return rows


def reference_stats() -> dict[str, dict]:
    """Numeric statistics only (for report alignment): key -> {stat -> float}."""
    out = {}
    for key, row in load_reference().items():
        out[key] = {k: v for k, v in row.items() if k not in _META_FIELDS and k != "v0"}
    return out
