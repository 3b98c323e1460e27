"""Guided intermediate resampling filter (bootstrap guide).

Particles are reweighted and resampled at Ninter intermediate times inside
each observation interval, using a guide function that anticipates the next
``lookahead`` observations.  The guide forecasts each particle with the
deterministic skeleton trajectory and spreads it with bootstrap residuals
from Nguide stochastic simulations; the guide weight is the product over
forecast times and units of the residual-smoothed measurement densities,
each raised to a discount power so that weight information is released
gradually across the intermediate steps.
"""

from __future__ import annotations

import math
import numpy as np

from ..kernels import systematic_positions
from ..model import SpatPompModel
from ..rng import as_stream
from .common import (LOG_WEIGHT_FLOOR, FilterResult, component_params,
                     log_mean_exp_weights, skeleton_path)

__all__ = ["girf", "girf_discount"]


def girf_discount(times_ext, n: int, s: int, ninter: int, l_abs: int,
                  lookahead: int) -> float:
    """Discount exponent eta for forecast time t_l at intermediate step s.

    ``times_ext`` holds (t0, t_1, ..., t_N); n and l_abs are 0-based and
    absolute observation indices (l_abs in n+1 .. min(n+lookahead, N)); the
    baseline index l_abs - lookahead clamps at 0.
    """
    t_ns = times_ext[n] + (times_ext[n + 1] - times_ext[n]) * s / ninter
    t_l = times_ext[l_abs]
    t_base = times_ext[max(l_abs - lookahead, 0)]
    double = 2.0 if lookahead == 1 else 1.0
    return 1.0 - (t_l - t_ns) / ((t_l - t_base) * double)


def _repeat_params(theta: dict, k: int) -> dict:
    """Per-particle parameter arrays repeated k times (guide batch layout)."""
    out = {}
    for name, v in theta.items():
        v = np.asarray(v, dtype=np.float64)
        out[name] = np.repeat(v, k) if v.ndim == 1 else v
    return out


def girf(model: SpatPompModel, params=None, j: int = 500, ninter: int = 1,
         nguide: int = 20, lookahead: int = 1, rng=0,
         _theta_swarm=None, _perturb=None) -> FilterResult:
    """Guided intermediate resampling filter.

    Args:
        model: SpatPompModel with rinit, rprocess, dunit_measure, skeleton.
        params: parameter dict (defaults to model.params).
        j: particles.
        ninter: intermediate resampling steps per observation interval.
        nguide: guide simulations per particle.
        lookahead: forecast horizon in observation counts (clamped at N).
        rng: seed or RngStream.

    The private hooks ``_theta_swarm``/``_perturb`` support iterated GIRF:
    a (name -> (J,) estimation-scale array) swarm carried through the same
    loop, perturbed before each prediction step, and resampled with the
    particles.
    """
    comp = model.components
    comp.require("rinit", "dunit_measure", "skeleton")
    if comp.rprocess is None and comp.rprocess_bulk is None:
        comp.require("rprocess")
    stream = as_stream(rng)
    gen = stream.child("process").generator

    j, ninter, nguide = int(j), int(ninter), int(nguide)
    lookahead = max(1, int(lookahead))
    n_times = model.n_times
    times_ext = np.concatenate([[model.grid.t0], model.grid.times])

    swarm = _theta_swarm
    if swarm is not None:
        theta = swarm.natural()
    else:
        theta = component_params(params if params is not None else model.params)

    x = np.asarray(comp.rinit(theta, model.covars_at(model.grid.t0), j, gen),
                   dtype=np.float64)
    log_gf = np.zeros(j)
    cond = np.zeros(n_times * ninter)
    n_failures = 0

    for n in range(n_times):
        lseq = list(range(n + 1, min(n + lookahead, n_times) + 1))
        nl = len(lseq)
        targets = [times_ext[l] for l in lseq]
        t_n, t_n1 = times_ext[n], times_ext[n + 1]

        # guide simulations and their residuals about the skeleton forecast
        theta_rep = _repeat_params(theta, nguide)
        xg = np.repeat(x, nguide, axis=0)
        guide_states = np.empty((nl, j * nguide) + x.shape[1:])
        t_prev = t_n
        for li, t_l in enumerate(targets):
            model.reset_accumulators(xg)
            xg = model.advance(xg, t_prev, t_l, theta_rep, gen)
            guide_states[li] = xg
            t_prev = t_l
        x0 = x.copy()
        model.reset_accumulators(x0)  # forecasts cover fresh intervals
        mu0 = skeleton_path(model, x0, t_n, targets, theta)  # (nl, j, U, K)
        eps = guide_states.reshape((nl, j, nguide) + x.shape[1:]) \
            - mu0[:, :, None]

        for s in range(1, ninter + 1):
            t_from = t_n + (t_n1 - t_n) * (s - 1) / ninter
            t_to = t_n + (t_n1 - t_n) * s / ninter

            if s == 1:
                if n > 0:
                    msr = model.unit_logdensity(
                        model.obs.at_time(n - 1), x, t_n, theta).sum(axis=1)
                else:
                    msr = np.zeros(j)
                model.reset_accumulators(x)
            else:
                msr = np.zeros(j)

            if swarm is not None and _perturb is not None:
                _perturb(swarm, n, gen)
                theta = swarm.natural()

            xp = model.advance(x, t_from, t_to, theta, gen)
            mup = skeleton_path(model, xp, t_to, targets, theta)

            frac = math.sqrt(max(t_n1 - t_to, 0.0) / (t_n1 - t_n))
            log_gp = np.zeros(j)
            theta_rep = _repeat_params(theta, nguide)
            for li, l in enumerate(lseq):
                xhat = mup[li][:, None] + eps[li] - (1.0 - frac) * eps[0]
                logd = model.unit_logdensity(
                    model.obs.at_time(l - 1),
                    xhat.reshape((j * nguide,) + x.shape[1:]),
                    times_ext[l], theta_rep)
                logd = np.where(np.isnan(logd), -np.inf, logd)
                logd = logd.reshape(j, nguide, model.n_units)
                # log mean over guides, shift-stabilized (scipy's logsumexp
                # is too slow for this inner loop)
                top = logd.max(axis=1, keepdims=True)
                shift = np.where(np.isfinite(top), top, 0.0)
                with np.errstate(divide="ignore"):
                    guide_lu = np.log(
                        np.exp(logd - shift).mean(axis=1)) + shift[:, 0, :]
                eta = girf_discount(times_ext, n, s, ninter, l, lookahead)
                log_gp += eta * guide_lu.sum(axis=1)

            logw = msr + log_gp - log_gf
            logw = np.where(np.isnan(logw), -np.inf, logw)
            top = logw.max()
            step = n * ninter + (s - 1)
            if not np.isfinite(top) or top < LOG_WEIGHT_FLOOR:
                cond[step] = LOG_WEIGHT_FLOOR
                n_failures += 1
                x = xp
                log_gf = log_gp
                continue
            cond[step] = log_mean_exp_weights(logw)
            u = stream.child("resample", n, s).generator.random()
            idx = systematic_positions(np.exp(logw - top), u)
            x = xp[idx]
            log_gf = log_gp[idx]
            eps = eps[:, idx]
            if swarm is not None:
                swarm.take(idx)
                theta = swarm.natural()

    return FilterResult(loglik=float(cond.sum()), cond_loglik=cond,
                        filter_particles=x, n_failures=n_failures)
