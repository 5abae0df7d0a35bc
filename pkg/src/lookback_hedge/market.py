"""Monte Carlo market generators: Black-Scholes and Merton jump-diffusion.

Log-return paths of a single underlying are simulated on an evenly spaced
grid under either the physical measure (realized market scenarios) or the
risk-neutral measure (pricing).  Alongside the spot path, the anniversary
running-maximum process of the guarantee account is tracked: at any grid
time t the maximum of the begin-of-year spot prices observed at integer
years 0..min(floor(t), T-1).  The terminal-year price never enters the
maximum.

Random number pipeline (fixed, documented for reproducibility)
--------------------------------------------------------------
All randomness comes from the counter-based Philox-4x64 generator keyed by
``(seed, stream)``.  Uniforms are built from 53-bit integers mapped to the
open interval (0, 1); normals are obtained by inverse CDF (``ndtri``) and
Poisson counts by inverse CDF of the exact probability mass.  Draw layout
is path-major: the draws for path ``i`` occupy row ``i`` of an
``(n_paths, n_steps)`` block, so path ``i`` is bit-reproducible no matter
how many paths are requested.  Per-period jump sums use one normal draw
scaled by the jump count (the sum of k iid normals is N(k*mu, k*sigma^2)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import TextIO, Union

import numpy as np
from scipy.special import gammaln, ndtri

__all__ = [
    "Measure",
    "BsmParams",
    "MjdParams",
    "MjdRiskNeutralJumps",
    "PathSet",
    "to_risk_neutral",
    "bsm_log_return",
    "mjd_log_return",
    "simulate_paths",
    "export_paths",
    "counter_uniforms",
    "counter_normals",
    "counter_poisson",
]

# Stream identifiers for the per-purpose Philox substreams.
STREAM_DIFFUSION = 0
STREAM_JUMP_COUNT = 1
STREAM_JUMP_SIZE = 2


class Measure(Enum):
    """Probability measure a simulation is run under."""

    PHYSICAL = "physical"
    RISK_NEUTRAL = "risk_neutral"


@dataclass(frozen=True)
class BsmParams:
    """Black-Scholes dynamics; both parameters on an annual basis."""

    mu: float
    sigma: float

    def __post_init__(self):
        if not (math.isfinite(self.mu) and math.isfinite(self.sigma)):
            raise ValueError("BSM parameters must be finite")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")


@dataclass(frozen=True)
class MjdParams:
    """Merton jump-diffusion dynamics under the physical measure.

    alpha, sigma and lam are on an annual basis; mu_j / sigma_j describe the
    normal log-jump sizes; gamma <= 1 is the risk-aversion parameter of the
    jump measure change.
    """

    alpha: float
    sigma: float
    lam: float
    mu_j: float
    sigma_j: float
    gamma: float = -1.5

    def __post_init__(self):
        vals = (self.alpha, self.sigma, self.lam, self.mu_j, self.sigma_j, self.gamma)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("MJD parameters must be finite")
        if self.sigma < 0 or self.sigma_j < 0:
            raise ValueError("volatilities must be >= 0")
        if self.lam < 0:
            raise ValueError("jump intensity must be >= 0")
        if self.gamma > 1:
            raise ValueError("risk aversion gamma must be <= 1")


@dataclass(frozen=True)
class MjdRiskNeutralJumps:
    """Jump-component parameters after the change to the pricing measure."""

    lam: float
    mu_j: float
    sigma_j: float

    @property
    def kappa(self) -> float:
        """Expected relative jump size E[e^J] - 1 under the pricing measure."""
        return math.expm1(self.mu_j + 0.5 * self.sigma_j ** 2)


Model = Union[BsmParams, MjdParams]


def to_risk_neutral(params: MjdParams) -> MjdRiskNeutralJumps:
    """Map physical-measure jump parameters to their risk-neutral counterparts.

    The diffusive volatility is unchanged; the jump distribution shifts to

        sigma_j' = sigma_j
        mu_j'    = mu_j - (1 - gamma) * sigma_j^2
        lam'     = lam * exp(-(1 - gamma) * (mu_j - (1 - gamma) * sigma_j^2 / 2))

    with gamma <= 1, so gamma = 1 is the identity transform.  For gamma < 1
    jumps become more frequent and more negative on average.
    """
    g = 1.0 - params.gamma
    mu_j_q = params.mu_j - g * params.sigma_j ** 2
    lam_q = params.lam * math.exp(-g * (params.mu_j - 0.5 * g * params.sigma_j ** 2))
    return MjdRiskNeutralJumps(lam=lam_q, mu_j=mu_j_q, sigma_j=params.sigma_j)


def _require_rate(measure: Measure, r) -> float:
    if measure is Measure.RISK_NEUTRAL:
        if r is None:
            raise ValueError("risk-neutral simulation requires the risk-free rate r")
        return float(r)
    return 0.0


def bsm_log_return(params: BsmParams, measure: Measure, dt: float, noise, r=None):
    """One-period Black-Scholes log-return (m - sigma^2/2)*dt + sigma*sqrt(dt)*z.

    The drift m is ``params.mu`` under the physical measure and ``r`` under
    the risk-neutral one.  ``noise`` is a standard normal draw (scalar or
    array; broadcasting applies).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    noise = np.asarray(noise, dtype=float)
    if not np.all(np.isfinite(noise)):
        raise ValueError("noise must be finite")
    m = params.mu if measure is Measure.PHYSICAL else _require_rate(measure, r)
    out = (m - 0.5 * params.sigma ** 2) * dt + params.sigma * math.sqrt(dt) * noise
    return float(out) if out.ndim == 0 else out


def mjd_drift(a: float, lam: float, mu_j: float, sigma_j: float, sigma: float, dt: float) -> float:
    """Compensated Merton drift term (a - lam*kappa - sigma^2/2)*dt."""
    kappa = math.expm1(mu_j + 0.5 * sigma_j ** 2)
    return (a - lam * kappa - 0.5 * sigma ** 2) * dt


def mjd_log_return(
    params: MjdParams,
    measure: Measure,
    dt: float,
    noise: float,
    jump_count: int,
    jump_sizes,
    r=None,
) -> float:
    """One-period Merton log-return with explicit jump draws.

    ``jump_sizes`` must hold exactly ``jump_count`` realized log-jump sizes;
    they are summed onto the compensated-drift diffusion term.  Under the
    risk-neutral measure the drift uses ``r`` and the compensator uses the
    transformed jump parameters (the caller's draws are then understood as
    coming from the transformed jump law).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if not math.isfinite(noise):
        raise ValueError("noise must be finite")
    if jump_count < 0:
        raise ValueError("jump_count must be >= 0")
    jump_sizes = np.atleast_1d(np.asarray(jump_sizes, dtype=float))
    if jump_count == 0 and jump_sizes.size == 0:
        pass
    elif jump_sizes.size != jump_count:
        raise ValueError("jump_sizes length must equal jump_count")
    if measure is Measure.PHYSICAL:
        a, lam, mu_j, sigma_j = params.alpha, params.lam, params.mu_j, params.sigma_j
    else:
        q = to_risk_neutral(params)
        a, lam, mu_j, sigma_j = _require_rate(measure, r), q.lam, q.mu_j, q.sigma_j
    drift = mjd_drift(a, lam, mu_j, sigma_j, params.sigma, dt)
    return drift + params.sigma * math.sqrt(dt) * noise + float(jump_sizes.sum())


# ---------------------------------------------------------------------------
# Counter-based draw pipeline
# ---------------------------------------------------------------------------

def _generator(seed: int, stream: int) -> np.random.Generator:
    key = np.array([np.uint64(seed), np.uint64(stream)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def counter_uniforms(seed: int, stream: int, shape) -> np.ndarray:
    """Open-interval (0,1) uniforms with fixed counter consumption per cell.

    Each uniform is (2k+1)/2^54 for a 53-bit integer k, so neither endpoint
    can occur and the inverse-CDF transforms below stay finite.
    """
    ints = _generator(seed, stream).integers(0, 1 << 53, size=shape, dtype=np.int64)
    return (2.0 * ints + 1.0) * 2.0 ** -54


def counter_normals(seed: int, stream: int, shape) -> np.ndarray:
    """Standard normals via inverse CDF of counter-based uniforms."""
    return ndtri(counter_uniforms(seed, stream, shape))


def _poisson_cdf(rate: float) -> np.ndarray:
    """Cumulative Poisson probabilities up to a tail below 1e-16."""
    if rate < 0:
        raise ValueError("Poisson rate must be >= 0")
    if rate == 0.0:
        return np.ones(1)
    k_max = 10
    while True:
        k = np.arange(k_max + 1)
        pmf = np.exp(-rate + k * math.log(rate) - gammaln(k + 1))
        cdf = np.cumsum(pmf)
        if 1.0 - cdf[-1] < 1e-16 or k_max > 10_000:
            return np.minimum(cdf, 1.0)
        k_max *= 2


def counter_poisson(seed: int, stream: int, shape, rate: float) -> np.ndarray:
    """Poisson counts by inverse CDF: one uniform consumed per count."""
    u = counter_uniforms(seed, stream, shape)
    return np.searchsorted(_poisson_cdf(rate), u, side="left").astype(np.int64)


# ---------------------------------------------------------------------------
# Path simulation
# ---------------------------------------------------------------------------

@dataclass
class PathSet:
    """Batch of simulated begin-of-period spot paths plus running maxima.

    spot_begin[i, n] is the price at the beginning of period n (columns 0..N);
    the end-of-period price of period n is spot_begin[i, n+1].  running_max
    tracks the anniversary maximum described in the module docstring.
    """

    n_paths: int
    n_steps: int
    dt: float
    spot_begin: np.ndarray
    running_max: np.ndarray
    seed: int

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    @property
    def terminal_spot(self) -> np.ndarray:
        return self.spot_begin[:, -1]

    @property
    def terminal_max(self) -> np.ndarray:
        return self.running_max[:, -1]


def anniversary_running_max(spot_begin: np.ndarray, steps_per_year: int, horizon_years: int) -> np.ndarray:
    """Running maximum of begin-of-year prices, capped at year T-1.

    At grid step n (time t = n / steps_per_year) the value is the maximum of
    the spot prices at integer years 0..min(floor(t), T-1).
    """
    n_steps = spot_begin.shape[1] - 1
    anniversaries = spot_begin[:, :: steps_per_year]  # columns = years 0..T
    ann_max = np.maximum.accumulate(anniversaries[:, :horizon_years], axis=1)
    year_index = np.minimum(np.arange(n_steps + 1) // steps_per_year, horizon_years - 1)
    return ann_max[:, year_index]


def simulate_paths(
    model: Model,
    measure: Measure,
    n_paths: int,
    n_steps: int,
    horizon_years: int,
    s0: float,
    seed: int,
    r=None,
) -> PathSet:
    """Simulate ``n_paths`` spot paths on an N-step grid over T years.

    The grid must contain every anniversary (n_steps divisible by the
    integer horizon), which the ratchet running maximum requires.
    """
    if n_paths <= 0 or n_steps <= 0:
        raise ValueError("n_paths and n_steps must be positive")
    if s0 <= 0:
        raise ValueError("s0 must be positive")
    horizon_years = int(horizon_years)
    if horizon_years < 1 or n_steps % horizon_years != 0:
        raise ValueError(
            "n_steps must be a positive multiple of the integer horizon "
            "(anniversaries must lie on the grid)"
        )
    dt = horizon_years / n_steps
    shape = (n_paths, n_steps)
    z = counter_normals(seed, STREAM_DIFFUSION, shape)

    if isinstance(model, BsmParams):
        m = model.mu if measure is Measure.PHYSICAL else _require_rate(measure, r)
        y = (m - 0.5 * model.sigma ** 2) * dt + model.sigma * math.sqrt(dt) * z
    elif isinstance(model, MjdParams):
        if measure is Measure.PHYSICAL:
            a, lam, mu_j, sigma_j = model.alpha, model.lam, model.mu_j, model.sigma_j
        else:
            q = to_risk_neutral(model)
            a, lam, mu_j, sigma_j = _require_rate(measure, r), q.lam, q.mu_j, q.sigma_j
        counts = counter_poisson(seed, STREAM_JUMP_COUNT, shape, lam * dt)
        jz = counter_normals(seed, STREAM_JUMP_SIZE, shape)
        jump_sum = counts * mu_j + np.sqrt(counts, dtype=float) * sigma_j * jz
        y = mjd_drift(a, lam, mu_j, sigma_j, model.sigma, dt) + model.sigma * math.sqrt(dt) * z + jump_sum
    else:
        raise TypeError(f"unsupported model type: {type(model).__name__}")

    log_spot = np.empty((n_paths, n_steps + 1))
    log_spot[:, 0] = math.log(s0)
    np.cumsum(y, axis=1, out=log_spot[:, 1:])
    log_spot[:, 1:] += math.log(s0)
    spot = np.exp(log_spot)
    running_max = anniversary_running_max(spot, n_steps // horizon_years, horizon_years)
    return PathSet(
        n_paths=n_paths,
        n_steps=n_steps,
        dt=dt,
        spot_begin=spot,
        running_max=running_max,
        seed=seed,
    )


def export_paths(paths: PathSet, out: TextIO) -> None:
    """Write a PathSet as columnar text: path,step,time_years,spot_begin,running_max."""
    out.write("path,step,time_years,spot_begin,running_max\n")
    times = paths.times
    for i in range(paths.n_paths):
        for n in range(paths.n_steps + 1):
            out.write(
                f"{i},{n},{times[n]:.10g},{paths.spot_begin[i, n]:.12g},{paths.running_max[i, n]:.12g}\n"
            )
