"""Adapted bagged filter.

Each bootstrap replicate carries a single adapted trajectory: at every
observation time it proposes Np particles from its current state, weights
them by the full measurement density (the adapted weights) and keeps one.
The replicates are then combined with weights restricted to a spatiotemporal
neighborhood of each (unit, time), giving per-(unit, time) conditional log
likelihood components and filter particles.
"""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np
from scipy.special import logsumexp

from ..errors import ValidationError
from ..model import SpatPompModel
from ..rng import as_stream
from .common import LOG_WEIGHT_FLOOR, FilterResult, component_params

__all__ = ["abf", "nbhd_full", "nbhd_lagged"]


def nbhd_full(n_units: int) -> Callable:
    """The whole admissible history A_{u,n}: every earlier time at every
    unit, plus lower-indexed units at the same time (0-based indices)."""
    def nbhd(u: int, n: int) -> list:
        pts = [(v, m) for m in range(n) for v in range(n_units)]
        pts.extend((v, n) for v in range(u))
        return pts
    return nbhd


def nbhd_lagged(lags: int = 1) -> Callable:
    """Same-unit history truncated to the given number of lags."""
    def nbhd(u: int, n: int) -> list:
        return [(u, n - k) for k in range(1, lags + 1) if n - k >= 0]
    return nbhd


def _validate_nbhd(points, u, n, n_units):
    for (v, m) in points:
        if not (0 <= v < n_units):
            raise ValidationError(
                f"neighborhood of (u={u}, n={n}) contains unit {v} out of range")
        if not (m < n or (m == n and v < u)) or m < 0:
            raise ValidationError(
                f"neighborhood of (u={u}, n={n}) contains ({v}, {m}) outside "
                "the admissible set A_(u,n)")


def abf(model: SpatPompModel, params=None, nrep: int = 100, j: int = 10,
        nbhd: Optional[Callable] = None, rng=0) -> FilterResult:
    """Adapted bagged filter with ``nrep`` replicates of ``j`` particles.

    ``nbhd(u, n) -> [(unit, time), ...]`` uses 0-based indices and must stay
    inside A_{u,n} (strictly earlier times, or same time and lower unit).
    The default is the full admissible history.
    """
    comp = model.components
    comp.require("rinit", "dunit_measure")
    if comp.rprocess is None and comp.rprocess_bulk is None:
        comp.require("rprocess")
    theta = component_params(params if params is not None else model.params)
    stream = as_stream(rng)
    gen = stream.child("process").generator

    n_units, n_times = model.n_units, model.n_times
    nrep, j = int(nrep), int(j)
    if nbhd is None:
        nbhd = nbhd_full(n_units)
    neighborhoods = {}
    for n in range(n_times):
        for u in range(n_units):
            pts = list(nbhd(u, n))
            _validate_nbhd(pts, u, n, n_units)
            neighborhoods[(u, n)] = pts

    x_if = np.asarray(
        comp.rinit(theta, model.covars_at(model.grid.t0), nrep, gen),
        dtype=np.float64)
    # unit log weights theta_{u,n}^{i,p} for the whole pass
    log_theta = np.empty((nrep, j, n_units, n_times))
    n_failures = 0
    xp = None
    t_prev = model.grid.t0
    for n in range(n_times):
        t = model.grid.times[n]
        xp = np.repeat(x_if, j, axis=0)  # (nrep*j, U, K)
        model.reset_accumulators(xp)
        xp = model.advance(xp, t_prev, t, theta, gen)
        logd = model.unit_logdensity(model.obs.at_time(n), xp, t, theta)
        logd = np.where(np.isnan(logd), -np.inf, logd)
        log_theta[:, :, :, n] = logd.reshape(nrep, j, n_units)

        # adapted resampling: one survivor per replicate
        logw = log_theta[:, :, :, n].sum(axis=2)  # (nrep, j)
        top = logw.max(axis=1, keepdims=True)
        degenerate = ~np.isfinite(top[:, 0])
        n_failures += int(degenerate.sum())
        w = np.where(np.isfinite(logw - top), np.exp(logw - top), 0.0)
        w[degenerate] = 1.0  # fall back to a uniform pick
        cum = np.cumsum(w, axis=1)
        u01 = gen.random(nrep) * cum[:, -1]
        pick = (u01[:, None] > cum).sum(axis=1)
        x_if = xp.reshape(nrep, j, n_units, -1)[np.arange(nrep), pick]
        t_prev = t

    # local prediction weights and conditional log likelihoods
    unit_cond = np.empty((n_times, n_units))
    final_wlf = {}
    for n in range(n_times):
        for u in range(n_units):
            pts = neighborhoods[(u, n)]
            past = {}
            current = []
            for (v, m) in pts:
                if m == n:
                    current.append(v)
                else:
                    past.setdefault(m, []).append(v)
            hist = np.zeros(nrep)
            for m, vs in past.items():
                block = log_theta[:, :, vs, m].sum(axis=2)  # (nrep, j)
                hist += logsumexp(block, axis=1) - np.log(j)
            log_wlp = hist[:, None] + (
                log_theta[:, :, current, n].sum(axis=2) if current
                else np.zeros((nrep, j)))
            log_num = log_wlp + log_theta[:, :, u, n]
            denom = logsumexp(log_wlp)
            num = logsumexp(log_num)
            if not np.isfinite(num) or not np.isfinite(denom):
                unit_cond[n, u] = LOG_WEIGHT_FLOOR
                n_failures += 1
                if n == n_times - 1:
                    final_wlf[u] = np.full(nrep * j, -np.inf)
                continue
            unit_cond[n, u] = num - denom
            if n == n_times - 1:
                final_wlf[u] = (log_num - num).reshape(-1)

    # filter particles at the final time, assembled unit by unit
    draw_gen = stream.child("filter-draw").generator
    xp_last = xp.reshape(nrep * j, n_units, -1)
    filter_particles = np.empty((j, n_units, model.state_dim))
    for u in range(n_units):
        logw = final_wlf[u]
        if not np.isfinite(logw).any():
            logw = np.zeros(nrep * j)
        w = np.exp(logw - logw.max())
        cum = np.cumsum(w)
        picks = (draw_gen.random(j)[:, None] * cum[-1] > cum[None, :]).sum(axis=1)
        filter_particles[:, u, :] = xp_last[picks, u, :]

    cond = unit_cond.sum(axis=1)
    return FilterResult(loglik=float(cond.sum()), cond_loglik=cond,
                        filter_particles=filter_particles,
                        n_failures=n_failures, unit_cond_loglik=unit_cond)
