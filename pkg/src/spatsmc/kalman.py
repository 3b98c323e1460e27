"""Exact filtering for linear-Gaussian state space models.

X_n = F X_{n-1} + w_n, w ~ N(0, Q);  Y_n = H X_n + v_n, v ~ N(0, R);
X_0 ~ point mass at m0 or N(m0, P0).  This is the ground-truth likelihood
oracle used to validate every Monte Carlo filter on linear-Gaussian models.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import ValidationError

__all__ = ["LinearGaussianSpec", "KalmanResult", "kf_loglik"]

_LOG_2PI = float(np.log(2.0 * np.pi))


def _check_psd(name: str, a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError(f"{name} must be square")
    if not np.allclose(a, a.T, atol=1e-10):
        raise ValidationError(f"{name} must be symmetric")
    if np.any(np.linalg.eigvalsh(a) < -1e-10 * max(1.0, np.trace(a))):
        raise ValidationError(f"{name} must be positive semidefinite")
    return a


@dataclass(frozen=True)
class LinearGaussianSpec:
    """Matrices of a linear-Gaussian state space model."""

    f: np.ndarray   # state transition
    q: np.ndarray   # process covariance
    h: np.ndarray   # observation matrix
    r: np.ndarray   # observation covariance
    m0: np.ndarray  # initial mean
    p0: np.ndarray = None  # initial covariance; zero for point-mass init

    def __post_init__(self):
        f = np.asarray(self.f, dtype=np.float64)
        h = np.asarray(self.h, dtype=np.float64)
        m0 = np.asarray(self.m0, dtype=np.float64)
        d = f.shape[0]
        p0 = self.p0 if self.p0 is not None else np.zeros((d, d))
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "m0", m0)
        object.__setattr__(self, "q", _check_psd("Q", self.q))
        object.__setattr__(self, "r", _check_psd("R", self.r))
        object.__setattr__(self, "p0", _check_psd("P0", p0))
        if f.shape != (d, d) or self.q.shape != (d, d) or m0.shape != (d,):
            raise ValidationError("state dimensions inconsistent")
        if h.shape[1] != d or self.r.shape != (h.shape[0], h.shape[0]):
            raise ValidationError("observation dimensions inconsistent")
        if np.any(np.diag(self.r) <= 0.0):
            raise ValidationError(
                "R must have strictly positive diagonal (degenerate "
                "observation noise is not supported)")


@dataclass
class KalmanResult:
    loglik: float
    cond_loglik: np.ndarray           # (N,)
    filtered_means: np.ndarray        # (N, d)
    filtered_covs: np.ndarray         # (N, d, d)


def kf_loglik(spec: LinearGaussianSpec, observations: np.ndarray) -> KalmanResult:
    """Exact log likelihood and filter moments by the Kalman recursion.

    ``observations`` is (U, N) matching the package's observation layout (or
    (N,) for a scalar state).  Missing observations are not supported here.
    Uses the Joseph-form covariance update and re-symmetrizes each step.
    """
    y = np.asarray(observations, dtype=np.float64)
    if y.ndim == 1:
        y = y[None, :]
    if np.isnan(y).any():
        raise ValidationError("kf_loglik does not support missing observations")
    dy, n = y.shape
    if dy != spec.h.shape[0]:
        raise ValidationError("observation rows do not match H")

    f, q, h, r = spec.f, spec.q, spec.h, spec.r
    m = spec.m0.copy()
    p = spec.p0.copy()
    d = m.shape[0]
    eye = np.eye(d)

    cond = np.empty(n)
    means = np.empty((n, d))
    covs = np.empty((n, d, d))
    for i in range(n):
        # predict
        m = f @ m
        p = f @ p @ f.T + q
        # innovation
        resid = y[:, i] - h @ m
        s = h @ p @ h.T + r
        try:
            cf = cho_factor(s, lower=True)
        except np.linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError(
                f"singular innovation covariance at step {i}") from exc
        logdet = 2.0 * np.sum(np.log(np.diag(cf[0])))
        maha = resid @ cho_solve(cf, resid)
        cond[i] = -0.5 * (dy * _LOG_2PI + logdet + maha)
        # update (Joseph form)
        k = cho_solve(cf, h @ p).T
        imkh = eye - k @ h
        m = m + k @ resid
        p = imkh @ p @ imkh.T + k @ r @ k.T
        p = 0.5 * (p + p.T)
        means[i] = m
        covs[i] = p

    return KalmanResult(loglik=float(cond.sum()), cond_loglik=cond,
                        filtered_means=means, filtered_covs=covs)
