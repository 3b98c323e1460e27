"""Ensemble Kalman filter with perturbed observations.

The forecast measurement mean comes from eunit_measure and the measurement
noise covariance is diagonal with entries averaged from vunit_measure over
the prediction ensemble.  No localization or regularization is attempted, so
ensembles with J not well above U inherit the usual rank limitations.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from ..model import SpatPompModel
from ..rng import as_stream
from ..stochastics import psd_cholesky
from .common import FilterResult, component_params

__all__ = ["enkf"]

_LOG_2PI = math.log(2.0 * math.pi)


def _gaussian_update(x_flat, yhat, y_obs, r_diag, gen):
    """One EnKF analysis step; returns (updated ensemble, cond loglik)."""
    j = x_flat.shape[0]
    ybar = yhat.mean(axis=0)
    y_tilde = yhat - ybar
    x_tilde = x_flat - x_flat.mean(axis=0)
    sigma_y = y_tilde.T @ y_tilde / (j - 1) + np.diag(r_diag)
    sigma_xy = x_tilde.T @ y_tilde / (j - 1)

    lower = psd_cholesky(sigma_y)
    cf = (lower, True)
    # Kalman gain K = sigma_xy sigma_y^{-1}, applied as solves
    gain = cho_solve(cf, sigma_xy.T).T

    resid = y_obs - ybar
    half = solve_triangular(lower, resid, lower=True)
    logdet = 2.0 * np.sum(np.log(np.diag(lower)))
    cond = -0.5 * (y_obs.shape[0] * _LOG_2PI + logdet + half @ half)

    noise = np.sqrt(r_diag)[None, :] * gen.standard_normal(yhat.shape)
    innov = y_obs[None, :] - yhat + noise
    return x_flat + innov @ gain.T, float(cond)


def enkf(model: SpatPompModel, params=None, j: int = 1000, rng=0) -> FilterResult:
    """Ensemble Kalman filter; cond_loglik[n] = log N(y_n; Ybar_n, Sigma_Y)."""
    comp = model.components
    comp.require("rinit", "eunit_measure", "vunit_measure")
    if comp.rprocess is None and comp.rprocess_bulk is None:
        comp.require("rprocess")
    theta = component_params(params if params is not None else model.params)
    stream = as_stream(rng)
    gen = stream.child("process").generator

    j = int(j)
    x = np.asarray(comp.rinit(theta, model.covars_at(model.grid.t0), j, gen),
                   dtype=np.float64)
    u, k = model.n_units, model.state_dim
    n_times = model.n_times
    cond = np.empty(n_times)
    t_prev = model.grid.t0
    for n in range(n_times):
        t = model.grid.times[n]
        model.reset_accumulators(x)
        x = model.advance(x, t_prev, t, theta, gen)
        yhat = np.asarray(comp.eunit_measure(x, t, theta), dtype=np.float64)
        r_diag = np.asarray(comp.vunit_measure(x, t, theta),
                            dtype=np.float64).mean(axis=0)
        x_flat, cond[n] = _gaussian_update(
            x.reshape(j, u * k), yhat, model.obs.at_time(n), r_diag, gen)
        x = x_flat.reshape(j, u, k)
        t_prev = t

    return FilterResult(loglik=float(cond.sum()), cond_loglik=cond,
                        filter_particles=x, n_failures=0)
