"""Profile likelihood tooling: logmeanexp, profile designs and Monte Carlo
adjusted profile (MCAP) confidence intervals."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np
from scipy.special import logsumexp
from scipy.stats import chi2

from ..errors import ValidationError
from ..model import ParamTransform
from ..rng import as_stream

__all__ = ["logmeanexp", "ProfileDesign", "profile_design", "McapResult",
           "mcap"]


def logmeanexp(values, se: bool = False):
    """log(mean(exp(values))), computed with a max shift.

    With ``se=True`` also returns the jackknife standard error
    (n - 1) * sd(leave-one-out estimates) / sqrt(n).
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValidationError("logmeanexp: empty input")
    est = float(logsumexp(v) - np.log(v.size))
    if not se:
        return est
    if v.size < 2:
        raise ValidationError("logmeanexp: standard error needs >= 2 values")
    n = v.size
    loo = np.array([logsumexp(np.delete(v, i)) - np.log(n - 1)
                    for i in range(n)])
    return est, float((n - 1) * np.std(loo, ddof=1) / np.sqrt(n))


@dataclass
class ProfileDesign:
    """Starting points for a profile search over one parameter."""

    name: str
    grid: np.ndarray
    starts: list  # list of parameter dicts, profiled name fixed per row


def profile_design(name: str, grid, lower: Mapping, upper: Mapping,
                   nprof: int, rng=0,
                   transform: Optional[ParamTransform] = None) -> ProfileDesign:
    """Draw nprof uniform starts per grid value from a parameter hyperbox.

    Draws are uniform on the estimation scale between toEst(lower) and
    toEst(upper) and back-transformed; the profiled parameter is excluded
    from the box and fixed to its grid value row by row.  Row count is
    len(grid) * nprof.
    """
    transform = transform or ParamTransform()
    lower, upper = dict(lower), dict(upper)
    if name in lower or name in upper:
        raise ValidationError(
            f"profiled parameter {name!r} must not appear in the box bounds")
    if set(lower) != set(upper):
        raise ValidationError("lower and upper bounds must share their keys")
    for k in lower:
        if lower[k] > upper[k]:
            raise ValidationError(f"lower bound exceeds upper for {k!r}")
    lo = transform.to_est(lower)
    hi = transform.to_est(upper)
    gen = as_stream(rng).child("profile-design").generator
    grid = np.asarray(grid, dtype=np.float64)
    names = list(lower)
    starts = []
    for value in grid:
        for _ in range(int(nprof)):
            draw = {k: float(gen.uniform(lo[k], hi[k])) if hi[k] > lo[k]
                    else float(lo[k]) for k in names}
            point = transform.from_est(draw)
            point[name] = float(value)
            starts.append(point)
    return ProfileDesign(name=name, grid=grid, starts=starts)


@dataclass
class McapResult:
    """Monte Carlo adjusted profile: smooth, maximizer, cutoff, interval."""

    parameter_grid: np.ndarray
    smoothed: np.ndarray
    mle: float
    cutoff: float
    ci: tuple
    level: float
    se_stat: float
    se_mc: float
    inflation: float
    flat: bool = False  # profile carried no usable curvature


def _local_quadratic_smooth(x, y, grid, span):
    n = x.shape[0]
    q = min(n, max(4, int(np.ceil(span * n))))
    pred = np.empty(grid.shape[0])
    for i, g in enumerate(grid):
        d = np.abs(x - g)
        cut = np.sort(d)[q - 1]
        keep = d <= cut
        dmax = d[keep].max()
        w = (1.0 - (d[keep] / dmax) ** 3) ** 3 if dmax > 0 else np.ones(keep.sum())
        xc = x[keep] - g
        design = np.stack([np.ones(xc.shape[0]), xc, xc ** 2], axis=1)
        wd = design * w[:, None]
        beta, *_ = np.linalg.lstsq(wd.T @ design, wd.T @ y[keep], rcond=None)
        pred[i] = beta[0]
    return pred


def mcap(loglik, parameter, level: float = 0.95, span: float = 0.75,
         grid_points: int = 1000) -> McapResult:
    """Monte Carlo adjusted profile confidence interval.

    Smooths the profile points with local quadratic regression (tricube
    weights over a ``span`` fraction of the points), locates the maximizer,
    and cuts at ``chi2(level, 1)/2`` times an inflation factor
    ``1 + se_mc^2 / se_stat^2``: se_stat comes from the fitted quadratic
    curvature, se_mc from the weighted-regression variance of its maximizer,
    so Monte Carlo noise in the profile widens the interval.
    """
    y = np.asarray(loglik, dtype=np.float64).ravel()
    x = np.asarray(parameter, dtype=np.float64).ravel()
    if y.shape != x.shape:
        raise ValidationError("mcap: loglik and parameter lengths differ")
    if np.unique(x).size < 5:
        raise ValidationError("mcap: need at least 5 distinct parameter values")
    grid = np.linspace(x.min(), x.max(), int(grid_points))
    smoothed = _local_quadratic_smooth(x, y, grid, span)
    imax = int(np.argmax(smoothed))
    mle = float(grid[imax])

    # weighted quadratic around the maximizer for curvature and its noise
    d = np.abs(x - mle)
    q = min(x.shape[0], max(4, int(np.ceil(span * x.shape[0]))))
    cut = np.sort(d)[q - 1]
    keep = d <= cut
    dmax = d[keep].max()
    w = (1.0 - (d[keep] / dmax) ** 3) ** 3 if dmax > 0 else np.ones(keep.sum())
    design = np.stack([np.ones(keep.sum()), x[keep], x[keep] ** 2], axis=1)
    wd = design * w[:, None]
    xtwx = wd.T @ design
    beta = np.linalg.solve(xtwx, wd.T @ y[keep])
    resid = y[keep] - design @ beta
    dof = max(1, keep.sum() - 3)
    sigma2 = float((w * resid ** 2).sum() / dof)
    vcov = sigma2 * np.linalg.inv(xtwx)

    a = -beta[2]  # loglik ~ -a p^2 + b p + c with a > 0 near a maximum
    b = beta[1]
    chi = float(chi2.ppf(level, df=1))
    flat = not (a > 0.0)
    if flat:
        se_stat = np.inf
        se_mc = 0.0
        inflation = 1.0
        cutoff = chi / 2.0
    else:
        var_b = vcov[1, 1]
        var_a = vcov[2, 2]
        cov_ab = -vcov[1, 2]
        se_mc2 = max(0.0, (var_b - 2.0 * (b / a) * cov_ab
                           + (b / a) ** 2 * var_a) / (4.0 * a * a))
        se_stat2 = 1.0 / (2.0 * a)
        inflation = max(1.0, (se_stat2 + se_mc2) / se_stat2)
        cutoff = 0.5 * chi * inflation
        se_stat = float(np.sqrt(se_stat2))
        se_mc = float(np.sqrt(se_mc2))

    ci = _interval(grid, smoothed, imax, cutoff)
    if flat or imax in (0, grid.shape[0] - 1) or ci[0] == grid[0] \
            or ci[1] == grid[-1]:
        warnings.warn("mcap: smoothed profile gives a one-sided or "
                      "uninformative interval; endpoints clamped to the grid",
                      stacklevel=2)
    return McapResult(parameter_grid=grid, smoothed=smoothed, mle=mle,
                      cutoff=float(cutoff), ci=ci, level=level,
                      se_stat=se_stat, se_mc=se_mc,
                      inflation=float(inflation), flat=flat)


def _interval(grid, smoothed, imax, cutoff) -> tuple:
    """CI endpoints where the smooth crosses max - cutoff, interpolated
    linearly between grid points (clamped to the grid ends)."""
    target = smoothed[imax] - cutoff
    lo = float(grid[0])
    for i in range(imax, 0, -1):
        if smoothed[i - 1] < target:
            frac = (smoothed[i] - target) / (smoothed[i] - smoothed[i - 1])
            lo = float(grid[i] - frac * (grid[i] - grid[i - 1]))
            break
    hi = float(grid[-1])
    for i in range(imax, grid.shape[0] - 1):
        if smoothed[i + 1] < target:
            frac = (smoothed[i] - target) / (smoothed[i] - smoothed[i + 1])
            hi = float(grid[i] + frac * (grid[i + 1] - grid[i]))
            break
    return lo, hi
