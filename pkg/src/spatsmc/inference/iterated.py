"""Iterated filtering: IGIRF, IEnKF and IUBF parameter searches.

All three extend the same idea: filter with random-walk-perturbed parameters
carried per particle, cool the perturbations geometrically across
iterations, and read the estimate off the final parameter swarm.
Perturbations act on the estimation scale (log / logit per the model's
transform) and are back-transformed before any model component runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Union

import numpy as np
import pandas as pd
from scipy.special import logsumexp

from ..errors import ValidationError
from ..filters.abf import nbhd_lagged, _validate_nbhd
from ..filters.common import LOG_WEIGHT_FLOOR, component_params
from ..filters.enkf import _gaussian_update
from ..filters.girf import girf
from ..model import SpatPompModel
from ..rng import as_stream
from .perturb import CoolingSchedule, PerturbationSpec, ThetaSwarm

__all__ = ["SearchResult", "igirf", "ienkf", "iubf"]


@dataclass
class SearchResult:
    """Iterated-filtering output: estimate, per-iteration trace, swarm.

    ``trace`` has one row per iteration with the swarm-mean parameters and
    that iteration's own filter log likelihood estimate (no fresh
    evaluation).  ``swarm`` maps parameter names to the final natural-scale
    particle values.
    """

    params: dict
    trace: pd.DataFrame
    swarm: dict


def _as_cooling(cooling) -> CoolingSchedule:
    if isinstance(cooling, CoolingSchedule):
        return cooling
    return CoolingSchedule(float(cooling))


def _as_spec(rw_sd, model) -> PerturbationSpec:
    if isinstance(rw_sd, PerturbationSpec):
        spec = rw_sd
    else:
        spec = PerturbationSpec(dict(rw_sd), frozenset(model.ivp_names))
    spec.validate_names(model.params)
    return spec


def _trace_frame(rows) -> pd.DataFrame:
    return pd.DataFrame(rows)


def igirf(model: SpatPompModel, theta0: Optional[Mapping] = None,
          ngirf: int = 30, j: int = 1000, ninter: int = 1, nguide: int = 20,
          lookahead: int = 1, rw_sd: Union[Mapping, PerturbationSpec] = (),
          cooling: Union[float, CoolingSchedule] = 0.5, rng=0) -> SearchResult:
    """Iterated GIRF maximum likelihood search.

    Per iteration m: IVPs are perturbed once at the start with sd
    ``sd * a^(m/50)``; regular parameters at every intermediate step with sd
    ``sd * a^(m/50) / sqrt(ninter)``.  The parameter swarm rides along the
    GIRF particles and is resampled with them; the trace records the swarm
    mean (estimation scale, back-transformed) and the iteration's GIRF log
    likelihood.
    """
    theta0 = dict(theta0 if theta0 is not None else model.params)
    spec = _as_spec(rw_sd, model)
    cooling = _as_cooling(cooling)
    stream = as_stream(rng)
    swarm = ThetaSwarm(model, theta0, int(j), spec.perturbed_names)

    regular = spec.regular()
    ivp = spec.ivp()
    step_scale = 1.0 / math.sqrt(int(ninter))
    rows = []
    last = None
    for m in range(1, int(ngirf) + 1):
        cool = cooling.sd_multiplier(m)
        iter_stream = stream.child("igirf", m)
        if ivp:
            swarm.perturb({k: sd * cool for k, sd in ivp.items()},
                          iter_stream.child("ivp").generator)

        def perturb_step(sw, n, gen, _cool=cool):
            if regular:
                sw.perturb({k: sd * _cool * step_scale
                            for k, sd in regular.items()}, gen)

        last = girf(model, j=j, ninter=ninter, nguide=nguide,
                    lookahead=lookahead, rng=iter_stream,
                    _theta_swarm=swarm, _perturb=perturb_step)
        row = {"iteration": m, "loglik": last.loglik}
        row.update(swarm.mean_natural())
        rows.append(row)

    return SearchResult(params=swarm.mean_natural(),
                        trace=_trace_frame(rows), swarm=swarm.natural())


def ienkf(model: SpatPompModel, theta0: Optional[Mapping] = None,
          nenkf: int = 20, j: int = 1000,
          rw_sd: Union[Mapping, PerturbationSpec] = (),
          cooling: Union[float, CoolingSchedule] = 0.5, rng=0) -> SearchResult:
    """Iterated EnKF: joint Kalman updates of the state and parameter
    ensemble Z = (X, Theta).

    Parameters that leave the forecast mean unchanged (e.g. pure measurement
    noise scales) receive no systematic Kalman update and only diffuse.
    """
    comp = model.components
    comp.require("rinit", "eunit_measure", "vunit_measure")
    if comp.rprocess is None and comp.rprocess_bulk is None:
        comp.require("rprocess")
    theta0 = dict(theta0 if theta0 is not None else model.params)
    spec = _as_spec(rw_sd, model)
    cooling = _as_cooling(cooling)
    stream = as_stream(rng)
    j = int(j)
    swarm = ThetaSwarm(model, theta0, j, spec.perturbed_names)
    pnames = list(spec.perturbed_names)
    regular = spec.regular()

    u, k = model.n_units, model.state_dim
    rows = []
    for m in range(1, int(nenkf) + 1):
        cool = cooling.sd_multiplier(m)
        gen = stream.child("ienkf", m).generator
        # iteration-start perturbation: every parameter with a nonzero sd
        swarm.perturb({n: sd * cool for n, sd in spec.sds.items() if sd > 0},
                      gen)
        theta = swarm.natural()
        x = np.asarray(comp.rinit(theta, model.covars_at(model.grid.t0),
                                  j, gen), dtype=np.float64)
        cond = np.empty(model.n_times)
        t_prev = model.grid.t0
        for n in range(model.n_times):
            t = model.grid.times[n]
            if regular:
                swarm.perturb({nm: sd * cool for nm, sd in regular.items()},
                              gen)
                theta = swarm.natural()
            model.reset_accumulators(x)
            x = model.advance(x, t_prev, t, theta, gen)
            yhat = np.asarray(comp.eunit_measure(x, t, theta),
                              dtype=np.float64)
            r_diag = np.asarray(comp.vunit_measure(x, t, theta),
                                dtype=np.float64).mean(axis=0)
            z = np.concatenate(
                [x.reshape(j, u * k)]
                + [swarm.est[nm][:, None] for nm in pnames], axis=1)
            z, cond[n] = _gaussian_update(z, yhat, model.obs.at_time(n),
                                          r_diag, gen)
            x = z[:, :u * k].reshape(j, u, k)
            for d, nm in enumerate(pnames):
                swarm.est[nm] = z[:, u * k + d].copy()
            theta = swarm.natural()
            t_prev = t
        row = {"iteration": m, "loglik": float(cond.sum())}
        row.update(swarm.mean_natural())
        rows.append(row)

    return SearchResult(params=swarm.mean_natural(),
                        trace=_trace_frame(rows), swarm=swarm.natural())


def iubf(model: SpatPompModel, theta0: Optional[Mapping] = None,
         nubf: int = 10, nparam: int = 20, nrep_per_param: int = 10,
         nbhd: Optional[Callable] = None, prop: float = 0.5,
         rw_sd: Union[Mapping, PerturbationSpec] = (),
         cooling: Union[float, CoolingSchedule] = 0.5, rng=0) -> SearchResult:
    """Iterated unadapted bagged filter.

    Runs ``nparam`` parameter candidates, each scored at every observation
    time by an ``nrep_per_param``-replicate bagged filter restricted to the
    ``nbhd`` neighborhood; the top ``ceil(prop * nparam)`` candidates survive
    (ties broken by ascending candidate index) and are copied ``1/prop``
    times.  Each candidate's perturbation at a time step is shared by its
    replicates, which makes the survivor copy rule exact.

    ``nbhd`` defaults to the previous observation at the same unit; long
    neighborhood products degenerate onto single replicates here because
    each replicate carries one trajectory, so keep neighborhoods local.
    """
    comp = model.components
    comp.require("rinit", "dunit_measure")
    if comp.rprocess is None and comp.rprocess_bulk is None:
        comp.require("rprocess")
    theta0 = dict(theta0 if theta0 is not None else model.params)
    spec = _as_spec(rw_sd, model)
    cooling = _as_cooling(cooling)
    ntheta, nrep = int(nparam), int(nrep_per_param)
    p = float(prop)
    if p <= 0.0 or p > 1.0 or p * ntheta < 1.0:
        raise ValidationError("iubf: need 0 < prop <= 1 with prop * nparam >= 1")
    n_keep = math.ceil(p * ntheta)
    stream = as_stream(rng)
    gen = stream.child("iubf").generator

    n_units, n_times = model.n_units, model.n_times
    if nbhd is None:
        nbhd = nbhd_lagged(1)
    neighborhoods = {}
    for n in range(n_times):
        for u in range(n_units):
            pts = list(nbhd(u, n))
            _validate_nbhd(pts, u, n, n_units)
            neighborhoods[(u, n)] = pts

    swarm = ThetaSwarm(model, theta0, ntheta, spec.perturbed_names)
    regular = spec.regular()
    ivp = spec.ivp()

    rows = []
    for m in range(1, int(nubf) + 1):
        cool = cooling.sd_multiplier(m)
        if ivp:
            swarm.perturb({nm: sd * cool for nm, sd in ivp.items()}, gen)
        theta_all = component_params(swarm.natural())
        theta_flat = {nm: (np.repeat(v, nrep) if v.ndim == 1 else v)
                      for nm, v in theta_all.items()}
        x = np.asarray(comp.rinit(theta_flat, model.covars_at(model.grid.t0),
                                  ntheta * nrep, gen), dtype=np.float64)
        log_theta = np.full((ntheta, nrep, n_units, n_times), -np.inf)
        iter_cond = np.empty(n_times)
        t_prev = model.grid.t0
        for n in range(n_times):
            t = model.grid.times[n]
            if regular:
                swarm.perturb({nm: sd * cool for nm, sd in regular.items()},
                              gen)
            theta_all = component_params(swarm.natural())
            theta_flat = {nm: (np.repeat(v, nrep) if v.ndim == 1 else v)
                          for nm, v in theta_all.items()}
            model.reset_accumulators(x)
            x = model.advance(x, t_prev, t, theta_flat, gen)
            logd = model.unit_logdensity(model.obs.at_time(n), x, t,
                                         theta_flat)
            logd = np.where(np.isnan(logd), -np.inf, logd)
            log_theta[:, :, :, n] = logd.reshape(ntheta, nrep, n_units)

            # per-candidate conditional log likelihood scores
            r = np.zeros(ntheta)
            for u in range(n_units):
                pts = neighborhoods[(u, n)]
                log_wlp = np.zeros((ntheta, nrep))
                for (v, mm) in pts:
                    log_wlp += log_theta[:, :, v, mm]
                num = logsumexp(log_wlp + log_theta[:, :, u, n], axis=1)
                den = logsumexp(log_wlp, axis=1)
                lam = np.where(np.isfinite(num) & np.isfinite(den),
                               num - den, LOG_WEIGHT_FLOOR)
                r += lam
            order = np.lexsort((np.arange(ntheta), -r))
            survivors = np.sort(order[:n_keep])
            copy_idx = survivors[np.minimum(
                np.ceil(p * np.arange(1, ntheta + 1)).astype(int) - 1,
                n_keep - 1)]
            swarm.take(copy_idx)
            x = x.reshape(ntheta, nrep, n_units, -1)[copy_idx].reshape(
                ntheta * nrep, n_units, -1)
            log_theta = log_theta[copy_idx]
            iter_cond[n] = logsumexp(r) - math.log(ntheta)
            t_prev = t
        row = {"iteration": m, "loglik": float(iter_cond.sum())}
        row.update(swarm.mean_natural())
        rows.append(row)

    return SearchResult(params=swarm.mean_natural(),
                        trace=_trace_frame(rows), swarm=swarm.natural())
