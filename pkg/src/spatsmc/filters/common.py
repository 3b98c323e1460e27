"""Shared filter machinery: results, weight policy, skeleton integration."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from ..errors import CapabilityError
from ..model import SpatPompModel

# natural-scale weight tolerance: a timestep whose max weight falls below
# this is a filtering failure (ancestors kept, floor-valued conditional ll)
WEIGHT_FLOOR = 1e-300
LOG_WEIGHT_FLOOR = math.log(WEIGHT_FLOOR)

__all__ = [
    "FilterResult",
    "WEIGHT_FLOOR",
    "LOG_WEIGHT_FLOOR",
    "log_mean_exp_weights",
    "component_params",
    "skeleton_trajectory",
    "skeleton_path",
]


@dataclass
class FilterResult:
    """Output of one filtering pass.

    loglik is always the sum of cond_loglik.  For ABF, cond_loglik holds the
    per-time sums of the per-(unit, time) components kept in
    unit_cond_loglik.  For GIRF, cond_loglik has one entry per intermediate
    step (N * Ninter entries).
    """

    loglik: float
    cond_loglik: np.ndarray
    filter_particles: np.ndarray
    n_failures: int
    unit_cond_loglik: Optional[np.ndarray] = None  # (N, U), ABF only


def log_mean_exp_weights(logw: np.ndarray) -> float:
    """log of the mean of exp(logw), -inf-safe."""
    finite = logw[np.isfinite(logw)]
    if finite.size == 0:
        return -np.inf
    return float(logsumexp(logw, b=1.0 / logw.shape[0]))


def component_params(params) -> dict:
    return {k: np.asarray(v, dtype=np.float64) for k, v in params.items()}


def _rk4_steps(model: SpatPompModel, x, t_from, t_to, params):
    comp = model.components
    span = t_to - t_from
    if span <= 0.0:
        return x
    nstep = 1 if model.dt is None else max(1, math.ceil(span / model.dt - 1e-9))
    h = span / nstep
    t = t_from
    for _ in range(nstep):
        c0 = model.covars_at(t)
        ch = model.covars_at(t + 0.5 * h)
        c1 = model.covars_at(t + h)
        k1 = np.asarray(comp.skeleton(x, t, params, c0))
        k2 = np.asarray(comp.skeleton(x + 0.5 * h * k1, t + 0.5 * h, params, ch))
        k3 = np.asarray(comp.skeleton(x + 0.5 * h * k2, t + 0.5 * h, params, ch))
        k4 = np.asarray(comp.skeleton(x + h * k3, t + h, params, c1))
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t += h
        if not np.all(np.isfinite(x)):
            raise FloatingPointError(
                "skeleton integration produced non-finite states")
    return x


def skeleton_trajectory(model: SpatPompModel, x, s: float, t: float,
                        params=None) -> np.ndarray:
    """Deterministic trajectory mu(x, s, t): RK4 solution of the skeleton.

    Fixed step equal to the model's Euler delta (one step when the model has
    none).  s == t returns x unchanged.
    """
    if model.components.skeleton is None:
        raise CapabilityError("model has no skeleton")
    if t < s:
        raise ValueError("skeleton_trajectory needs s <= t")
    theta = component_params(params if params is not None else model.params)
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 2
    if squeeze:
        x = x[None]
    out = _rk4_steps(model, x, s, t, theta)
    return out[0] if squeeze else out


def skeleton_path(model: SpatPompModel, x, t_start: float, targets,
                  params) -> np.ndarray:
    """Integrate the skeleton through successive observation times.

    Returns (len(targets), J, U, K) states recorded at each target;
    accumulator variables reset after each recorded target, mirroring the
    stochastic simulation semantics.
    """
    theta = component_params(params)
    out = np.empty((len(targets),) + x.shape)
    t_prev = t_start
    cur = np.array(x, dtype=np.float64, copy=True)
    for i, t in enumerate(targets):
        cur = _rk4_steps(model, cur, t_prev, t, theta)
        out[i] = cur
        model.reset_accumulators(cur)
        t_prev = t
    return out
