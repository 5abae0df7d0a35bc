"""Global hedging engine for long-dated ratchet-guarantee lookback options."""

__version__ = "0.1.0"
