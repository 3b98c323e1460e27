"""Coupled measles SEIR metapopulation model for up to five UK cities.

Gravity-coupled force of infection, school term-time seasonal transmission,
Euler-multinomial compartment transitions with multiplicative gamma white
noise on the infection rate, Poisson recruitment of susceptibles from lagged
births, and an overdispersed normal approximation for reported biweekly
cases.  Per unit the latent state is (S, E, I, R, C, W): C accumulates I->R
transitions within each observation interval and W the standardized noise
increments; both reset at each observation time.

The packaged case data is a simulated surrogate (see spatsmc/data/README.md);
the covariate table reproduces the historical 1950 city populations and
lagged birth rates in its first row.
"""

from __future__ import annotations

from importlib import resources
from typing import Mapping, Optional

import numpy as np
import pandas as pd

from .. import kernels
from ..errors import ValidationError
from ..model import ModelComponents, ParamTransform, SpatPompModel, build_model

__all__ = [
    "CITIES",
    "V_BY_G",
    "seasonality",
    "force_of_infection",
    "measles_default_params",
    "measles_build",
    "load_cases",
    "load_covariates",
]

CITIES = ("LONDON", "BIRMINGHAM", "LIVERPOOL", "MANCHESTER", "LEEDS")

# movement volume per unit gravitation constant, v_{u,v} / g
V_BY_G = np.array([
    [0.000, 2.205, 0.865, 0.836, 0.599],
    [2.205, 0.000, 0.665, 0.657, 0.375],
    [0.865, 0.665, 0.000, 1.118, 0.378],
    [0.836, 0.657, 1.118, 0.000, 0.580],
    [0.599, 0.375, 0.378, 0.580, 0.000],
])

EULER_DT = 2.0 / 365.0

_STATES = ("S", "E", "I", "R", "C", "W")
_TERM_FACTOR = 0.2411 / 0.7589
_RP_NAMES = ("R0", "amplitude", "gamma", "sigma", "mu", "sigmaSE", "rho",
             "psi", "g")


def _ivp_names(n_units: int) -> list:
    return [f"{s}{u + 1}_0" for s in ("S", "E", "I", "R")
            for u in range(n_units)]


def measles_default_params(n_units: int = 5) -> dict:
    """Default parameter vector for the packaged model.

    IVP fractions use R_0 = 1 - S_0 - E_0 - I_0 so each unit's fractions sum
    to one exactly.
    """
    s0, e0, i0 = 0.0297, 5.17e-05, 5.14e-05
    params = {
        "R0": 56.8, "amplitude": 0.554, "gamma": 30.4, "sigma": 28.9,
        "mu": 0.02, "sigmaSE": 0.02, "rho": 0.488, "psi": 0.116, "g": 100.0,
    }
    for u in range(n_units):
        params[f"S{u + 1}_0"] = s0
        params[f"E{u + 1}_0"] = e0
        params[f"I{u + 1}_0"] = i0
        params[f"R{u + 1}_0"] = 1.0 - s0 - e0 - i0
    return params


def term_time(t) -> np.ndarray:
    """School-term indicator for time(s) t in years."""
    t = np.asarray(t, dtype=np.float64)
    d = (t - np.floor(t)) * 365.25
    return (((d >= 7) & (d <= 100)) | ((d >= 115) & (d <= 199))
            | ((d >= 252) & (d <= 300)) | ((d >= 308) & (d <= 356)))


def seasonality(t: float, amplitude):
    """Term-time seasonal multiplier of the transmission rate."""
    amplitude = np.asarray(amplitude, dtype=np.float64)
    boost = 1.0 + amplitude * _TERM_FACTOR
    holiday = 1.0 - amplitude
    out = np.where(term_time(t), boost, holiday)
    return float(out) if out.ndim == 0 else out


def force_of_infection(u: int, infectious, pops, g: float,
                       v_by_g: np.ndarray) -> float:
    """Scalar per-unit force-of-infection bracket (before the beta factor)."""
    infectious = np.asarray(infectious, dtype=np.float64)
    pops = np.asarray(pops, dtype=np.float64)
    prev = infectious / pops
    foi = prev[u]
    for v in range(len(pops)):
        if v != u:
            foi += g * v_by_g[u, v] * (prev[v] - prev[u]) / pops[u]
    return float(foi)


def _foi_all(infectious, pops, g, v_by_g) -> np.ndarray:
    # (J, U) force of infection for all units at once
    prev = infectious / pops          # (J, U)
    coupling = (prev[:, None, :] - prev[:, :, None]) * v_by_g  # (J, U, U)
    return prev + g * coupling.sum(axis=2) / pops


def _jvec(params, name, j) -> np.ndarray:
    v = np.asarray(params[name], dtype=np.float64).reshape(-1)
    return np.ascontiguousarray(np.broadcast_to(v, (j,)))


def _measurement_mv(c, params):
    rho = np.asarray(params["rho"], dtype=np.float64)
    psi = np.asarray(params["psi"], dtype=np.float64)
    if rho.ndim < 2:  # moment-matched params may arrive per (particle, unit)
        rho = rho.reshape(-1, 1)
    if psi.ndim < 2:
        psi = psi.reshape(-1, 1)
    m = rho * c
    v = m * (1.0 - rho + psi * psi * m)
    return m, v


def _components(n_units: int, v_by_g: np.ndarray) -> ModelComponents:
    ivp = {s: [f"{s}{u + 1}_0" for u in range(n_units)]
           for s in ("S", "E", "I", "R")}

    def rinit(params, covars0, j, gen):
        pop = np.asarray(covars0["pop"], dtype=np.float64)
        x = np.zeros((j, n_units, 6))
        for slot, name in enumerate(("S", "E", "I")):
            frac = np.stack(
                [np.broadcast_to(np.asarray(params[p], np.float64).reshape(-1), (j,))
                 for p in ivp[name]], axis=1)
            x[:, :, slot] = np.rint(pop[None, :] * frac)
        x[:, :, 3] = np.rint(pop[None, :]) - x[:, :, :3].sum(axis=2)
        return x

    def _sweep(x, t, nsub, h, params, pop_edges, br, gen):
        # pop_edges: (nsub + 1, U) population at the substep boundaries
        j = x.shape[0]
        state = np.array(x, dtype=np.float64, order="C", copy=True)
        ts = t + h * np.arange(nsub)
        is_term = np.ascontiguousarray(term_time(ts).astype(np.uint8))
        kernels.measles_euler_sweep(
            gen, state, nsub, h,
            np.ascontiguousarray(pop_edges, dtype=np.float64),
            np.ascontiguousarray(br, dtype=np.float64),
            is_term,
            _jvec(params, "R0", j), _jvec(params, "amplitude", j),
            _jvec(params, "gamma", j), _jvec(params, "sigma", j),
            _jvec(params, "mu", j), _jvec(params, "sigmaSE", j),
            _jvec(params, "g", j), np.ascontiguousarray(v_by_g))
        return state

    def rprocess(x, t, dt, params, covars, gen):
        # single Euler increment with start-of-step covariates; the R
        # remainder then also uses the start population (the bulk path,
        # which all built-in drivers take, uses true boundary values)
        pop0 = np.asarray(covars["pop"], dtype=np.float64)
        pop_edges = np.stack([pop0, pop0], axis=0)
        br = np.asarray(covars["lag_birthrate"], dtype=np.float64)[None, :]
        return _sweep(x, t, 1, dt, params, pop_edges, br, gen)

    def rprocess_bulk(x, t, nsub, h, params, covars, gen):
        # covars arrive at the nsub + 1 substep boundaries
        pop_edges = np.asarray(covars["pop"], dtype=np.float64)
        br = np.asarray(covars["lag_birthrate"], dtype=np.float64)[:nsub]
        return _sweep(x, t, nsub, h, params, pop_edges, br, gen)

    def dunit_measure(y, x, t, params):
        m, v = _measurement_mv(x[:, :, 4], params)
        with np.errstate(invalid="ignore", divide="ignore"):
            logd = np.where(
                v > 0.0,
                -0.5 * (y[None, :] - m) ** 2 / v - 0.5 * np.log(2.0 * np.pi * v),
                np.where((y[None, :] == 0.0) & (m == 0.0), 0.0, -np.inf),
            )
        return logd

    def runit_measure(x, t, params, gen):
        m, v = _measurement_mv(x[:, :, 4], params)
        v = np.maximum(v, 0.0)
        cases = m + np.sqrt(v) * gen.standard_normal(m.shape)
        return np.where(cases > 0.0, np.rint(cases), 0.0)

    def eunit_measure(x, t, params):
        m, _ = _measurement_mv(x[:, :, 4], params)
        return np.broadcast_to(m, x.shape[:2]).copy()

    def vunit_measure(x, t, params):
        _, v = _measurement_mv(x[:, :, 4], params)
        return np.broadcast_to(v, x.shape[:2]).copy()

    def munit_measure(x, v, params):
        c = x[:, :, 4]
        rho = np.asarray(params["rho"], dtype=np.float64).reshape(-1, 1)
        psi = np.asarray(params["psi"], dtype=np.float64).reshape(-1, 1)
        m = rho * c
        binomial_var = rho * (1.0 - rho) * c
        with np.errstate(invalid="ignore", divide="ignore"):
            matched = np.sqrt(np.maximum(v - binomial_var, 0.0)) / m
        out = dict(params)
        out["psi"] = np.where((v > binomial_var) & (m > 0.0), matched,
                              np.broadcast_to(psi, c.shape))
        return out

    def skeleton(x, t, params, covars):
        pop = np.asarray(covars["pop"], dtype=np.float64)[None, :]
        br = np.asarray(covars["lag_birthrate"], dtype=np.float64)[None, :]
        j = x.shape[0]
        r0 = _jvec(params, "R0", j)[:, None]
        amp = _jvec(params, "amplitude", j)[:, None]
        gam = _jvec(params, "gamma", j)[:, None]
        sig = _jvec(params, "sigma", j)[:, None]
        mu = _jvec(params, "mu", j)[:, None]
        g = _jvec(params, "g", j)[:, None]
        seas = np.where(term_time(t), 1.0 + amp * _TERM_FACTOR, 1.0 - amp)
        beta = r0 * (gam + mu) * seas
        s, e, i, r = (x[:, :, k] for k in range(4))
        foi = beta * _foi_all(i, pop, g, v_by_g)
        dx = np.zeros_like(x)
        dx[:, :, 0] = br - (foi + mu) * s
        dx[:, :, 1] = foi * s - (sig + mu) * e
        dx[:, :, 2] = sig * e - (gam + mu) * i
        dx[:, :, 3] = gam * i - mu * r
        dx[:, :, 4] = gam * i
        return dx

    return ModelComponents(
        rinit=rinit,
        rprocess=rprocess,
        rprocess_bulk=rprocess_bulk,
        dunit_measure=dunit_measure,
        runit_measure=runit_measure,
        eunit_measure=eunit_measure,
        vunit_measure=vunit_measure,
        munit_measure=munit_measure,
        skeleton=skeleton,
        accumulator_names=("C", "W"),
        param_names=tuple(_RP_NAMES) + tuple(_ivp_names(n_units)),
    )


def _load_fixture(name: str) -> pd.DataFrame:
    with resources.files("spatsmc.data").joinpath(name).open("rb") as fh:
        return pd.read_csv(fh)


def load_cases() -> pd.DataFrame:
    """Packaged biweekly case table (year, city, cases); simulated surrogate."""
    return _load_fixture("measles_cases.csv")


def load_covariates() -> pd.DataFrame:
    """Packaged covariate table (year, city, pop, lag_birthrate)."""
    return _load_fixture("measles_covar.csv")


def _transform() -> ParamTransform:
    scales = {name: "log" for name in
              ("R0", "sigmaSE", "psi", "g", "gamma", "sigma", "mu")}
    scales["rho"] = "logit"
    scales["amplitude"] = "logit"
    return ParamTransform(scales)


def _validate_params(params: Mapping, n_units: int):
    for u in range(n_units):
        total = sum(float(params[f"{s}{u + 1}_0"]) for s in ("S", "E", "I", "R"))
        if abs(total - 1.0) > 1e-6:
            raise ValidationError(
                f"measles: initial fractions for unit {u + 1} sum to {total}, "
                "need 1 within 1e-6")


def measles_build(n_units: int = 5, data: Optional[pd.DataFrame] = None,
                  covar: Optional[pd.DataFrame] = None,
                  params: Optional[Mapping] = None) -> SpatPompModel:
    """Build the measles model for the first n_units packaged cities.

    ``data``/``covar`` default to the packaged fixtures; custom frames must
    use the same long format (year, city, value columns) and city names drawn
    from the packaged five.
    """
    if not 1 <= n_units <= 5:
        raise ValidationError("measles: n_units must be between 1 and 5")
    cities = CITIES[:n_units]
    data = load_cases() if data is None else data
    covar = load_covariates() if covar is None else covar
    unknown = sorted(set(data["city"].unique()) - set(CITIES))
    if unknown:
        raise ValidationError(f"measles: unknown cities {unknown}; the "
                              f"packaged units are {list(CITIES)}")
    data = data[data["city"].isin(cities)].copy()
    covar = covar[covar["city"].isin(cities)].copy()
    data["city"] = pd.Categorical(data["city"], categories=cities, ordered=True)
    data = data.sort_values(["year", "city"]).reset_index(drop=True)
    data["city"] = data["city"].astype(str)

    theta = measles_default_params(n_units)
    if params:
        theta.update({k: float(v) for k, v in params.items()})
    _validate_params(theta, n_units)

    t0 = float(data["year"].min()) - 1.0 / 26.0
    return build_model(
        data, t0, times="year", units="city",
        components=_components(n_units, V_BY_G[:n_units, :n_units]),
        params=theta,
        unit_statenames=_STATES,
        covariates=covar,
        transform=_transform(),
        ivp_names=_ivp_names(n_units),
        dt=EULER_DT,
    )
