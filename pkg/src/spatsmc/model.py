"""SpatPOMP model abstraction.

A SpatPOMP couples U unit-level latent processes observed through
conditionally independent unit measurements.  The model bundle holds the
observation grid, the unit-indexed data layout, covariates, parameter
transforms and the registry of model components; it is immutable after
construction and safe to share across threads.

Component calling conventions (all latent states are (J, U, K) float arrays,
J particles by U units by K unit state variables; parameters are dicts of
scalars or (J,) arrays so per-particle parameter vectors work):

    rinit(params, covars0, j, gen)        -> (J, U, K) states at t0
    rprocess(x, t, dt, params, covars, gen) -> one Euler increment
    rprocess_bulk(x, t, nsub, h, params, covars, gen)
        optional fused fast path covering nsub equal substeps; ``covars``
        maps names to (nsub + 1, U) arrays interpolated at the substep
        boundaries t, t+h, ..., t+nsub*h
    dunit_measure(y, x, t, params)        -> (J, U) log densities
    runit_measure(x, t, params, gen)      -> (J, U) simulated measurements
    eunit_measure(x, t, params)           -> (J, U) measurement means
    vunit_measure(x, t, params)           -> (J, U) measurement variances
    munit_measure(x, v, params)           -> params adjusted to variance v
    skeleton(x, t, params, covars)        -> (J, U, K) vector field
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
import pandas as pd

from .errors import CapabilityError, TransformError, ValidationError
from .rng import as_stream

__all__ = [
    "TimeGrid",
    "ObservationMatrix",
    "CovariateTable",
    "ParamTransform",
    "ModelComponents",
    "SpatPompModel",
    "SimResult",
    "build_model",
    "interpolate_covariates",
    "transform_params",
    "simulate",
    "pcol",
    "pvec",
]


def pcol(params: Mapping, name: str) -> np.ndarray:
    """Parameter as a column, ready to broadcast against (J, U) arrays."""
    return np.asarray(params[name], dtype=np.float64).reshape(-1, 1)


def pvec(params: Mapping, names: Sequence[str]) -> np.ndarray:
    """Per-unit parameter family (e.g. X1_0..XU_0) as a (J or 1, U) array."""
    cols = [np.asarray(params[n], dtype=np.float64).reshape(-1) for n in names]
    j = max(c.shape[0] for c in cols)
    return np.stack([np.broadcast_to(c, (j,)) for c in cols], axis=1)


@dataclass(frozen=True)
class TimeGrid:
    """Observation time grid: origin t0 and strictly increasing times."""

    t0: float
    times: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.float64)
        object.__setattr__(self, "times", times)
        if times.ndim != 1 or times.size < 1:
            raise ValidationError("TimeGrid: need at least one observation time")
        if np.any(np.diff(times) <= 0):
            raise ValidationError("TimeGrid: times must be strictly increasing")
        if self.t0 > times[0]:
            raise ValidationError("TimeGrid: t0 must not exceed the first time")

    @property
    def n(self) -> int:
        return self.times.shape[0]


@dataclass(frozen=True)
class ObservationMatrix:
    """U x N observations; NaN encodes missing and is always preserved."""

    values: np.ndarray  # (U, N)
    unit_names: tuple
    unit_obsname: str = "obs"

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", vals)
        if vals.ndim != 2 or vals.shape[0] != len(self.unit_names):
            raise ValidationError("ObservationMatrix: values must be U x N")

    @property
    def n_missing(self) -> int:
        return int(np.isnan(self.values).sum())

    def at_time(self, n: int) -> np.ndarray:
        """Observation vector y_n (U,), 0-based time index."""
        return self.values[:, n]


class CovariateTable:
    """Named covariate series with linear interpolation in time.

    Lookups inside the covariate time range interpolate linearly; outside it
    they return the nearest endpoint row.  Unit covariates are (T, U), shared
    covariates (T,).
    """

    def __init__(self, times, unit_covariates=None, shared_covariates=None):
        self.times = np.asarray(times, dtype=np.float64)
        if np.any(np.diff(self.times) < 0):
            raise ValidationError("CovariateTable: times must be nondecreasing")
        self.unit_covariates = {
            k: np.asarray(v, dtype=np.float64)
            for k, v in (unit_covariates or {}).items()
        }
        self.shared_covariates = {
            k: np.asarray(v, dtype=np.float64)
            for k, v in (shared_covariates or {}).items()
        }
        for k, v in self.unit_covariates.items():
            if v.ndim != 2 or v.shape[0] != self.times.shape[0]:
                raise ValidationError(f"CovariateTable: series {k!r} must be (T, U)")
        for k, v in self.shared_covariates.items():
            if v.shape != self.times.shape:
                raise ValidationError(f"CovariateTable: series {k!r} must be (T,)")

    @property
    def names(self):
        return tuple(self.unit_covariates) + tuple(self.shared_covariates)

    def lookup(self, t: float) -> dict:
        """Covariate values at time t: name -> (U,) array or float."""
        out = {}
        for k, v in self.unit_covariates.items():
            out[k] = np.array([np.interp(t, self.times, v[:, u])
                               for u in range(v.shape[1])])
        for k, v in self.shared_covariates.items():
            out[k] = float(np.interp(t, self.times, v))
        return out

    def lookup_many(self, ts) -> dict:
        """Vectorized lookup: name -> (len(ts), U) or (len(ts),) array."""
        ts = np.asarray(ts, dtype=np.float64)
        out = {}
        for k, v in self.unit_covariates.items():
            cols = [np.interp(ts, self.times, v[:, u]) for u in range(v.shape[1])]
            out[k] = np.stack(cols, axis=1)
        for k, v in self.shared_covariates.items():
            out[k] = np.interp(ts, self.times, v)
        return out


_SCALES = ("identity", "log", "logit")


@dataclass(frozen=True)
class ParamTransform:
    """Per-parameter estimation-scale tags: identity, log or logit."""

    scales: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        for name, scale in self.scales.items():
            if scale not in _SCALES:
                raise ValidationError(
                    f"ParamTransform: unknown scale {scale!r} for {name!r}")

    def scale_of(self, name: str) -> str:
        return self.scales.get(name, "identity")

    def to_est(self, params: Mapping) -> dict:
        out = {}
        for name, value in params.items():
            v = np.asarray(value, dtype=np.float64)
            scale = self.scale_of(name)
            if scale == "log":
                if np.any(v <= 0.0):
                    raise TransformError(name, value, scale)
                v = np.log(v)
            elif scale == "logit":
                if np.any((v <= 0.0) | (v >= 1.0)):
                    raise TransformError(name, value, scale)
                v = np.log(v / (1.0 - v))
            out[name] = v if v.ndim else float(v)
        return out

    def from_est(self, params: Mapping) -> dict:
        out = {}
        for name, value in params.items():
            v = np.asarray(value, dtype=np.float64)
            scale = self.scale_of(name)
            if scale == "log":
                v = np.exp(v)
            elif scale == "logit":
                v = 1.0 / (1.0 + np.exp(-v))
            out[name] = v if v.ndim else float(v)
        return out


@dataclass(frozen=True)
class ModelComponents:
    """Registry of user/model-supplied component callables.

    Only the components an algorithm needs must be present; missing ones
    raise CapabilityError at the point of use.  ``param_names`` lists every
    parameter the components reference, for build-time validation.
    ``handles_missing=False`` makes the framework score missing observations
    with log density 0 instead of passing NaN into dunit_measure.
    """

    rinit: Optional[Callable] = None
    rprocess: Optional[Callable] = None
    rprocess_bulk: Optional[Callable] = None
    dunit_measure: Optional[Callable] = None
    runit_measure: Optional[Callable] = None
    eunit_measure: Optional[Callable] = None
    vunit_measure: Optional[Callable] = None
    munit_measure: Optional[Callable] = None
    skeleton: Optional[Callable] = None
    accumulator_names: tuple = ()
    param_names: tuple = ()
    handles_missing: bool = False

    def require(self, *names: str):
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            raise CapabilityError(
                "model is missing required component(s): " + ", ".join(missing))


@dataclass(frozen=True)
class SpatPompModel:
    """Immutable bundle of data, times, covariates and model components."""

    unit_names: tuple
    unit_statenames: tuple
    grid: TimeGrid
    obs: ObservationMatrix
    components: ModelComponents
    params: dict
    covar: Optional[CovariateTable] = None
    transform: ParamTransform = field(default_factory=ParamTransform)
    ivp_names: frozenset = frozenset()
    dt: Optional[float] = None  # Euler step; None = exact one-step transitions

    def __post_init__(self):
        if len(set(self.unit_names)) != len(self.unit_names):
            raise ValidationError("unit names must be unique")
        if self.obs.values.shape != (self.n_units, self.grid.n):
            raise ValidationError("observation matrix does not match grid")
        unknown = [p for p in self.components.param_names if p not in self.params]
        if unknown:
            raise ValidationError(
                "components reference unknown parameter(s): " + ", ".join(unknown))
        bad_acc = [a for a in self.components.accumulator_names
                   if a not in self.unit_statenames]
        if bad_acc:
            raise ValidationError(
                "accumulator names not in unit_statenames: " + ", ".join(bad_acc))

    @property
    def n_units(self) -> int:
        return len(self.unit_names)

    @property
    def n_times(self) -> int:
        return self.grid.n

    @property
    def state_dim(self) -> int:
        return len(self.unit_statenames)

    @property
    def accumulator_indices(self) -> tuple:
        return tuple(self.unit_statenames.index(a)
                     for a in self.components.accumulator_names)

    def with_params(self, params: Mapping) -> "SpatPompModel":
        new = dict(self.params)
        new.update(params)
        return replace(self, params=new)

    def covars_at(self, t: float) -> dict:
        return self.covar.lookup(t) if self.covar is not None else {}

    def reset_accumulators(self, x: np.ndarray) -> None:
        for idx in self.accumulator_indices:
            x[:, :, idx] = 0.0

    def substeps(self, t_from: float, t_to: float) -> int:
        if self.dt is None:
            return 1
        return max(1, math.ceil((t_to - t_from) / self.dt - 1e-9))

    def advance(self, x, t_from, t_to, params, gen) -> np.ndarray:
        """Propagate particles from t_from to t_to by equal Euler substeps.

        Substep count is ceil((t_to - t_from)/dt) so trajectories land
        exactly on observation times.  Accumulator resets are the caller's
        job (they happen at observation-interval starts, not here).
        """
        if t_to <= t_from:
            return x
        nsub = self.substeps(t_from, t_to)
        h = (t_to - t_from) / nsub
        comp = self.components
        if comp.rprocess_bulk is not None:
            edges = t_from + h * np.arange(nsub + 1)
            covars = (self.covar.lookup_many(edges) if self.covar is not None
                      else {})
            return comp.rprocess_bulk(x, t_from, nsub, h, params, covars, gen)
        comp.require("rprocess")
        t = t_from
        for _ in range(nsub):
            x = comp.rprocess(x, t, h, params, self.covars_at(t), gen)
            t += h
        return x

    def unit_logdensity(self, y, x, t, params) -> np.ndarray:
        """(J, U) log unit measurement densities, masking missing y to 0."""
        self.components.require("dunit_measure")
        y = np.asarray(y, dtype=np.float64)
        missing = np.isnan(y)
        if missing.any() and not self.components.handles_missing:
            logd = self.components.dunit_measure(
                np.where(missing, 0.0, y), x, t, params)
            logd = np.array(logd, dtype=np.float64, copy=True)
            logd[:, missing] = 0.0
            return logd
        return np.asarray(
            self.components.dunit_measure(y, x, t, params), dtype=np.float64)


def _component_params(params: Mapping) -> dict:
    return {k: np.asarray(v, dtype=np.float64) for k, v in params.items()}


def build_model(data: pd.DataFrame, t0: float, *, times: str, units: str,
                components: ModelComponents, params: Mapping,
                unit_statenames: Sequence[str],
                covariates: Optional[pd.DataFrame] = None,
                shared_covarnames: Sequence[str] = (),
                transform: Optional[ParamTransform] = None,
                ivp_names: Sequence[str] = (),
                dt: Optional[float] = None) -> SpatPompModel:
    """Assemble and validate a SpatPompModel from long-format records.

    ``data`` must hold one row per (time, unit) pair with a single value
    column; every unit must appear at every time (missing values are encoded
    as NaN in the value column, never as absent rows).  ``covariates`` uses
    the same long format; columns named in ``shared_covarnames`` must agree
    across units at each time.
    """
    for col in (times, units):
        if col not in data.columns:
            raise ValidationError(f"data has no column {col!r}")
    value_cols = [c for c in data.columns if c not in (times, units)]
    if len(value_cols) != 1:
        raise ValidationError(
            f"data must have exactly one observation column, got {value_cols}")
    obs_col = value_cols[0]

    unit_names = tuple(pd.unique(data[units]))
    time_values = np.sort(pd.unique(data[times]).astype(np.float64))
    if len(data) != len(unit_names) * len(time_values):
        raise ValidationError(
            "ragged data grid: need one row per (time, unit) pair")
    try:
        wide = data.pivot(index=times, columns=units, values=obs_col)
    except ValueError as exc:
        raise ValidationError(f"duplicate (time, unit) rows: {exc}") from exc
    wide = wide.reindex(columns=list(unit_names))
    values = wide.to_numpy(dtype=np.float64).T  # (U, N)

    grid = TimeGrid(t0=float(t0), times=time_values)
    obs = ObservationMatrix(values=values, unit_names=unit_names,
                            unit_obsname=obs_col)

    covar = None
    if covariates is not None:
        if times not in covariates.columns or units not in covariates.columns:
            raise ValidationError(
                f"covariates need {times!r} and {units!r} columns")
        cnames = [c for c in covariates.columns if c not in (times, units)]
        ctimes = np.sort(pd.unique(covariates[times]).astype(np.float64))
        unit_cov, shared_cov = {}, {}
        for name in cnames:
            cw = covariates.pivot(index=times, columns=units, values=name)
            cw = cw.reindex(columns=list(unit_names))
            arr = cw.to_numpy(dtype=np.float64)
            if np.isnan(arr).any():
                raise ValidationError(
                    f"covariate {name!r} missing for some (time, unit) pair")
            if name in shared_covarnames:
                if not np.allclose(arr, arr[:, [0]]):
                    raise ValidationError(
                        f"shared covariate {name!r} differs across units")
                shared_cov[name] = arr[:, 0]
            else:
                unit_cov[name] = arr
        covar = CovariateTable(ctimes, unit_cov, shared_cov)

    return SpatPompModel(
        unit_names=unit_names,
        unit_statenames=tuple(unit_statenames),
        grid=grid,
        obs=obs,
        components=components,
        params=dict(params),
        covar=covar,
        transform=transform or ParamTransform(),
        ivp_names=frozenset(ivp_names),
        dt=dt,
    )


def interpolate_covariates(model: SpatPompModel, t: float) -> dict:
    """Covariate values at time t (linear inside the range, clamped outside)."""
    if model.covar is None or not model.covar.names:
        raise ValidationError("model has no covariates to interpolate")
    return model.covar.lookup(t)


def transform_params(model: SpatPompModel, params: Mapping,
                     direction: str) -> dict:
    """Move parameters between the natural and estimation scales."""
    if direction == "toEst":
        return model.transform.to_est(params)
    if direction == "fromEst":
        return model.transform.from_est(params)
    raise ValidationError(f"direction must be 'toEst' or 'fromEst', "
                          f"got {direction!r}")


@dataclass
class SimResult:
    """One simulated realization: latent path and observations."""

    times: np.ndarray   # (N,)
    t0: float
    states: np.ndarray  # (N + 1, U, K), row 0 at t0
    obs: np.ndarray     # (N, U)


def simulate(model: SpatPompModel, params: Optional[Mapping] = None,
             rng=0, nsim: int = 1) -> list:
    """Simulate nsim independent realizations of the model.

    The latent path advances by Euler substeps between observation times;
    accumulator variables reset to zero at the start of each observation
    interval, and recorded states hold the within-interval totals.
    """
    comp = model.components
    comp.require("rinit", "rprocess", "runit_measure")
    theta = _component_params(params if params is not None else model.params)
    stream = as_stream(rng)
    n, u, k = model.n_times, model.n_units, model.state_dim
    results = []
    for isim in range(nsim):
        gen = stream.child("simulate", isim).generator
        x = np.asarray(comp.rinit(theta, model.covars_at(model.grid.t0), 1, gen),
                       dtype=np.float64)
        states = np.empty((n + 1, u, k))
        obs = np.empty((n, u))
        states[0] = x[0]
        t_prev = model.grid.t0
        for i, t in enumerate(model.grid.times):
            model.reset_accumulators(x)
            x = model.advance(x, t_prev, t, theta, gen)
            states[i + 1] = x[0]
            obs[i] = np.asarray(comp.runit_measure(x, t, theta, gen))[0]
            t_prev = t
        results.append(SimResult(times=model.grid.times.copy(),
                                 t0=model.grid.t0, states=states, obs=obs))
    return results
