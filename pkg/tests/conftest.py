import os

os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")

import pytest

from lookback_hedge.market import BsmParams, MjdParams

import desklab


@pytest.fixture(scope="session")
def bsm_params() -> BsmParams:
    """The studied Black-Scholes market calibration."""
    return BsmParams(mu=0.10, sigma=0.15)


@pytest.fixture(scope="session")
def mjd_params() -> MjdParams:
    """The studied jump-diffusion market calibration."""
    return MjdParams(alpha=0.10, sigma=0.15, lam=0.10, mu_j=-0.20, sigma_j=0.15, gamma=-1.5)


@pytest.fixture(scope="session")
def desk_lab():
    """Callable returning memoized desk-scale training results by preset name."""
    return desklab.get_results
