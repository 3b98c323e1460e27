import numpy as np
import pytest

from spatsmc import bm_build, bm_to_lgspec, kf_loglik


@pytest.fixture(scope="session")
def bm2():
    """Small correlated Brownian motion model with fixed simulated data."""
    return bm_build(2, 5, rng=42)


@pytest.fixture(scope="session")
def bm2_kf(bm2):
    return kf_loglik(bm_to_lgspec(bm2), bm2.obs.values).loglik


@pytest.fixture(scope="session")
def bm10():
    return bm_build(10, 20, rng=531)


@pytest.fixture(scope="session")
def bm10_kf(bm10):
    return kf_loglik(bm_to_lgspec(bm10), bm10.obs.values).loglik


def run_mean_se(fn, n_runs, seed0=0):
    """Mean and standard error of fn(seed) over seeded replicates."""
    vals = np.array([fn(seed0 + i) for i in range(n_runs)])
    return vals.mean(), vals.std(ddof=1) / np.sqrt(n_runs), vals
