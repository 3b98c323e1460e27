"""Correlated Brownian motions on a circle of units.

Latent process: dX_u(t) = sum_v rho^dist(u,v) dW_v(t) with independent
Brownian drivers of infinitesimal variance sigma^2 and circle distance
dist(u, v) = min(|u-v|, |u-v+U|, |u-v-U|).  Measurements are
Y_{u,n} = X_{u,n} + N(0, tau^2).  Increments over any interval are exactly
Gaussian, so rprocess samples one exact transition per interval instead of
Euler substepping, and the model maps onto an exact linear-Gaussian spec for
oracle validation.
"""

from __future__ import annotations

import math
from typing import Mapping, Optional

import numpy as np

from ..errors import ValidationError
from ..kalman import LinearGaussianSpec
from ..model import (ModelComponents, ObservationMatrix, ParamTransform,
                     SpatPompModel, TimeGrid, pcol, pvec, simulate)
from ..rng import as_stream

__all__ = ["circle_distance", "bm_build", "bm_to_lgspec"]


def circle_distance(n_units: int) -> np.ndarray:
    """(U, U) circle distances between evenly spaced units."""
    idx = np.arange(n_units)
    diff = np.abs(idx[:, None] - idx[None, :])
    return np.minimum(diff, n_units - diff)


def _ivp_names(n_units: int) -> list:
    return [f"X{u + 1}_0" for u in range(n_units)]


def default_params(n_units: int) -> dict:
    params = {"rho": 0.4, "sigma": 1.0, "tau": 1.0}
    params.update({name: 0.0 for name in _ivp_names(n_units)})
    return params


def _mixing_matrices(rho, dist) -> np.ndarray:
    # (J, U, U) with entries rho^dist(u, v); rho scalar or (J,).  Powers are
    # taken once per distinct distance and gathered, not per matrix entry.
    rho = np.asarray(rho, dtype=np.float64).reshape(-1)
    powers = rho[:, None] ** np.arange(int(dist.max()) + 1)[None, :]
    return powers[:, dist.astype(np.intp)]


def _components(n_units: int) -> ModelComponents:
    dist = circle_distance(n_units)
    ivp = _ivp_names(n_units)
    # one 0/1 adjacency mask per distinct distance, so the per-particle
    # mixing R(rho_j) @ dW_j reduces to a few BLAS matmuls
    max_dist = int(dist.max())
    masks = [(dist == d).astype(np.float64) for d in range(max_dist + 1)]

    def rinit(params, covars0, j, gen):
        x0 = pvec(params, ivp)  # (1, U) or (J, U)
        return np.broadcast_to(x0[:, :, None], (j, n_units, 1)).copy()

    def rprocess(x, t, dt, params, covars, gen):
        j = x.shape[0]
        rho = np.asarray(params["rho"], dtype=np.float64).reshape(-1, 1)
        sigma = pcol(params, "sigma")
        dw = gen.standard_normal((j, n_units)) * (sigma * math.sqrt(dt))
        dx = np.zeros((j, n_units))
        for d, mask in enumerate(masks):
            dx += rho ** d * (dw @ mask)
        out = x.copy()
        out[:, :, 0] += dx
        return out

    def dunit_measure(y, x, t, params):
        tau = pcol(params, "tau")
        resid = y[None, :] - x[:, :, 0]
        return -0.5 * (resid / tau) ** 2 - np.log(tau) \
            - 0.5 * math.log(2.0 * math.pi)

    def runit_measure(x, t, params, gen):
        tau = pcol(params, "tau")
        return x[:, :, 0] + tau * gen.standard_normal(x.shape[:2])

    def eunit_measure(x, t, params):
        return x[:, :, 0].copy()

    def vunit_measure(x, t, params):
        tau = np.asarray(params["tau"], dtype=np.float64)
        if tau.ndim < 2:  # moment-matched tau may arrive per (particle, unit)
            tau = tau.reshape(-1, 1)
        return np.broadcast_to(tau ** 2, x.shape[:2]).copy()

    def munit_measure(x, v, params):
        out = dict(params)
        out["tau"] = np.sqrt(v)
        return out

    def skeleton(x, t, params, covars):
        return np.zeros_like(x)

    return ModelComponents(
        rinit=rinit,
        rprocess=rprocess,
        dunit_measure=dunit_measure,
        runit_measure=runit_measure,
        eunit_measure=eunit_measure,
        vunit_measure=vunit_measure,
        munit_measure=munit_measure,
        skeleton=skeleton,
        param_names=tuple(["rho", "sigma", "tau"] + ivp),
    )


def _validate(params: Mapping, n_units: int):
    if not -1.0 < float(params["rho"]) < 1.0:
        raise ValidationError("bm: |rho| must be < 1")
    if float(params["sigma"]) <= 0.0 or float(params["tau"]) <= 0.0:
        raise ValidationError("bm: sigma and tau must be positive")
    missing = [n for n in _ivp_names(n_units) if n not in params]
    if missing:
        raise ValidationError("bm: missing initial values: " + ", ".join(missing))


def bm_build(n_units: int, n_times: int, dt_obs: float = 1.0,
             params: Optional[Mapping] = None, rng=1) -> SpatPompModel:
    """Build a bm model of U units and N observations with simulated data."""
    if n_units < 1 or n_times < 1:
        raise ValidationError("bm: U and N must be >= 1")
    theta = default_params(n_units)
    if params:
        theta.update({k: float(v) for k, v in params.items()})
    _validate(theta, n_units)

    transform = ParamTransform({"sigma": "log", "tau": "log", "rho": "logit"})
    grid = TimeGrid(t0=0.0, times=dt_obs * np.arange(1, n_times + 1))
    unit_names = tuple(f"unit{u + 1}" for u in range(n_units))
    placeholder = ObservationMatrix(
        values=np.zeros((n_units, n_times)), unit_names=unit_names, unit_obsname="y")
    model = SpatPompModel(
        unit_names=unit_names,
        unit_statenames=("X",),
        grid=grid,
        obs=placeholder,
        components=_components(n_units),
        params=theta,
        transform=transform,
        ivp_names=frozenset(_ivp_names(n_units)),
        dt=None,  # transitions are exactly Gaussian over any interval
    )
    sim = simulate(model, rng=as_stream(rng).child("bm-data"), nsim=1)[0]
    obs = ObservationMatrix(values=sim.obs.T.copy(), unit_names=unit_names,
                            unit_obsname="y")
    return SpatPompModel(
        unit_names=unit_names,
        unit_statenames=("X",),
        grid=grid,
        obs=obs,
        components=model.components,
        params=theta,
        transform=transform,
        ivp_names=model.ivp_names,
        dt=None,
    )


def bm_to_lgspec(model: SpatPompModel, params: Optional[Mapping] = None
                 ) -> LinearGaussianSpec:
    """Exact linear-Gaussian spec of a bm model at the given parameters."""
    theta = dict(model.params)
    if params:
        theta.update(params)
    u = model.n_units
    times = model.grid.times
    steps = np.diff(np.concatenate([[model.grid.t0], times]))
    if not np.allclose(steps, steps[0]):
        raise ValidationError("bm_to_lgspec needs evenly spaced observations")
    dt = float(steps[0])
    rho, sigma, tau = (float(theta[k]) for k in ("rho", "sigma", "tau"))
    rmat = _mixing_matrices(rho, circle_distance(u).astype(np.float64))[0]
    q = sigma ** 2 * dt * (rmat @ rmat.T)
    m0 = np.array([float(theta[name]) for name in _ivp_names(u)])
    return LinearGaussianSpec(
        f=np.eye(u), q=q, h=np.eye(u), r=tau ** 2 * np.eye(u),
        m0=m0, p0=np.zeros((u, u)))
