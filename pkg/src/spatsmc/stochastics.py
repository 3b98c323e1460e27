"""Random primitives shared by the models and the filters.

Euler-multinomial compartment transitions, gamma white noise, systematic
resampling and multivariate normal draws.  All functions accept an int seed,
an RngStream, or a numpy Generator, and are pure given that handle.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .errors import ResamplingError
from .rng import as_stream

__all__ = [
    "reulermultinom",
    "rgammawn",
    "systematic_resample",
    "mvn_draw",
    "psd_cholesky",
]


def generator_of(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return as_stream(rng).generator


def reulermultinom(size, rates, dt, rng):
    """Euler-multinomial transition counts for one compartment.

    Draws (n_1, ..., n_K) ~ Multinomial(size, p_1, ..., p_K, p_stay) with
    p_j = (1 - exp(-sum(rates) * dt)) * rates_j / sum(rates).

    ``size`` may be a scalar or an (M,) vector; ``rates`` correspondingly
    (K,) or (M, K).  Returns int64 counts of matching shape.
    """
    gen = generator_of(rng)
    rates = np.asarray(rates, dtype=np.float64)
    if np.any(rates < 0.0):
        raise ValueError("reulermultinom: negative rate")
    if dt <= 0.0:
        raise ValueError("reulermultinom: dt must be positive")
    scalar = rates.ndim == 1
    if scalar:
        rates = rates[None, :]
        sizes = np.array([size], dtype=np.int64)
    else:
        sizes = np.asarray(size, dtype=np.int64)
    if np.any(sizes < 0):
        raise ValueError("reulermultinom: negative size")
    counts = kernels.euler_multinomial(gen, sizes, rates, float(dt))
    return counts[0] if scalar else counts


def rgammawn(sigma, dt, rng, size=None):
    """Gamma white-noise increment(s): Gamma(dt/sigma^2, sigma^2).

    Mean dt and variance sigma^2 * dt; sigma == 0 gives dt exactly.  With
    ``size=None`` returns a scalar, otherwise an array of that length
    (``sigma`` may then be an array of the same length).
    """
    if np.any(np.asarray(sigma) < 0.0):
        raise ValueError("rgammawn: sigma must be >= 0")
    if dt <= 0.0:
        raise ValueError("rgammawn: dt must be positive")
    gen = generator_of(rng)
    n = 1 if size is None else int(size)
    out = kernels.gamma_white_noise(gen, sigma, float(dt), n)
    return float(out[0]) if size is None else out


def systematic_resample(weights, rng):
    """Systematic resampling: J ancestor indices from J nonnegative weights.

    Marginal selection probability of index i is weights_i / sum(weights);
    realized counts differ from J * normalized weight by less than 1.

    Raises:
        ResamplingError: all weights are zero (or the sum is not finite).
    """
    w = np.asarray(weights, dtype=np.float64)
    total = w.sum()
    if not np.isfinite(total) or total <= 0.0 or np.any(w < 0.0):
        raise ResamplingError("systematic_resample: weights must be "
                              "nonnegative with positive finite sum")
    gen = generator_of(rng)
    u = gen.random()
    return kernels.systematic_positions(w, u)


def psd_cholesky(cov):
    """Lower Cholesky factor of a PSD matrix, with diagonal jitter fallback.

    A matrix that fails to factor gets 1e-10 * trace/dim added to its
    diagonal once; a second failure propagates numpy.linalg.LinAlgError.
    The all-zero matrix factors to zero.
    """
    cov = np.asarray(cov, dtype=np.float64)
    if not np.allclose(cov, cov.T, atol=1e-8, rtol=1e-8):
        raise np.linalg.LinAlgError("covariance is not symmetric")
    if np.all(cov == 0.0):
        return np.zeros_like(cov)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        jitter = 1e-10 * np.trace(cov) / cov.shape[0]
        if jitter <= 0.0:
            jitter = 1e-300
        return np.linalg.cholesky(cov + jitter * np.eye(cov.shape[0]))


def mvn_draw(mean, cov, rng, size=None):
    """Multivariate normal draw(s) with the shared PSD jitter policy."""
    gen = generator_of(rng)
    mean = np.asarray(mean, dtype=np.float64)
    lower = psd_cholesky(cov)
    if size is None:
        z = gen.standard_normal(mean.shape[0])
        return mean + lower @ z
    z = gen.standard_normal((int(size), mean.shape[0]))
    return mean[None, :] + z @ lower.T
