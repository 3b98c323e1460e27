"""Pure numpy implementations of the hot kernels.

These are the reference semantics; spatsmc.kernels._speedups implements the
same contracts in C for speed.  Counts and indices agree with the compiled
versions exactly in distribution (draw-for-draw orders differ), and
``systematic_positions`` agrees bit-for-bit since it consumes no randomness.
"""

from __future__ import annotations

import numpy as np

BACKEND = "pure"

# Gamma(shape, scale) with shape above this is numerically degenerate at its
# mean for double precision Monte Carlo purposes; return the mean exactly.
_GAMMA_DEGENERATE_SHAPE = 1e12


def euler_multinomial(gen, sizes, rates, dt):
    """Draw competing-exit transition counts for a batch of compartments.

    For each row m with occupancy ``sizes[m]`` and exit rates ``rates[m, k]``,
    the exit counts follow a multinomial with class probabilities
    ``p_k = (1 - exp(-sum_k rates_k * dt)) * rates_k / sum_k rates_k`` and the
    complement staying put.  Implemented as sequential conditional binomials,
    class-major so numpy vectorizes across the batch.

    Args:
        gen: numpy Generator.
        sizes: (M,) nonnegative int64 occupancies.
        rates: (M, K) nonnegative rates.
        dt: step length.

    Returns:
        (M, K) int64 transition counts with row sums <= sizes.
    """
    sizes = np.asarray(sizes, dtype=np.int64)
    rates = np.asarray(rates, dtype=np.float64)
    m, k = rates.shape
    total = rates.sum(axis=1)
    p_exit = -np.expm1(-total * dt)
    counts = np.zeros((m, k), dtype=np.int64)
    remaining = sizes.copy()
    prob_left = np.ones(m)
    pos = total > 0.0
    for j in range(k):
        pj = np.zeros(m)
        pj[pos] = rates[pos, j] / total[pos] * p_exit[pos]
        cond = np.zeros(m)
        ok = prob_left > 0.0
        cond[ok] = np.clip(pj[ok] / prob_left[ok], 0.0, 1.0)
        counts[:, j] = gen.binomial(remaining, cond)
        remaining -= counts[:, j]
        prob_left -= pj
    return counts


def gamma_white_noise(gen, sigma, dt, n):
    """Draw n gamma white-noise increments Gamma(dt/sigma^2, sigma^2).

    Mean dt, variance sigma^2 * dt.  sigma may be a scalar or an (n,) array;
    entries with sigma == 0 (or with shape beyond double-precision Monte Carlo
    resolution) return dt exactly.
    """
    sigma = np.broadcast_to(np.asarray(sigma, dtype=np.float64), (n,))
    out = np.full(n, dt, dtype=np.float64)
    var = sigma * sigma
    nz = var > 0.0
    shape = np.zeros(n)
    shape[nz] = dt / var[nz]
    active = nz & (shape < _GAMMA_DEGENERATE_SHAPE)
    if active.any():
        out[active] = gen.standard_gamma(shape[active]) * var[active]
    return out


def systematic_positions(weights, u):
    """Systematic resampling indices from weights and one uniform draw.

    Deterministic given u in [0, 1); counts of each index differ from
    J * normalized_weight by less than 1.
    """
    w = np.asarray(weights, dtype=np.float64)
    j = w.shape[0]
    cum = np.cumsum(w)
    positions = (u + np.arange(j)) / j * cum[-1]
    idx = np.searchsorted(cum, positions, side="right")
    return np.minimum(idx, j - 1).astype(np.int64)


def measles_euler_sweep(gen, state, nsub, dt, pop, births_rate, is_term,
                        r0, amplitude, gamma_rec, sigma_lat, mu, sigma_se, g,
                        v_by_g):
    """Advance a coupled SEIR ensemble by nsub Euler-multinomial substeps.

    ``state`` is (J, U, 6) float64 laid out as S, E, I, R, C, W and is updated
    in place.  ``pop`` holds (nsub + 1, U) interpolated populations at the
    substep boundaries: rates use the substep start, the R remainder the
    substep end, so S+E+I+R matches the population covariate after every
    step.  ``births_rate`` is (nsub, U) and ``is_term`` the (nsub,)
    school-term indicator.  Rate parameters are (J,) arrays so per-particle
    parameter vectors work.
    """
    jn, un, _ = state.shape
    term_boost = 1.0 + amplitude * (0.2411 / 0.7589)
    holiday = 1.0 - amplitude
    for m in range(nsub):
        seas = term_boost if is_term[m] else holiday
        beta = r0 * (gamma_rec + mu) * seas            # (J,)
        p = pop[m]                                     # (U,)
        prev = state[:, :, 2] / p                      # I/P, (J, U)
        coupling = (prev[:, None, :] - prev[:, :, None]) * v_by_g  # (J,U,U)
        foi = prev + g[:, None] * coupling.sum(axis=2) / p
        dw = gamma_white_noise(gen, np.repeat(sigma_se, un), dt,
                               jn * un).reshape(jn, un)

        s = state[:, :, 0].astype(np.int64)
        e = state[:, :, 1].astype(np.int64)
        i = state[:, :, 2].astype(np.int64)

        rate_se = beta[:, None] * foi * dw / dt
        mu_b = np.broadcast_to(mu[:, None], (jn, un))
        s_rates = np.stack([rate_se, mu_b], axis=2).reshape(jn * un, 2)
        e_rates = np.stack([np.broadcast_to(sigma_lat[:, None], (jn, un)),
                            mu_b], axis=2).reshape(jn * un, 2)
        i_rates = np.stack([np.broadcast_to(gamma_rec[:, None], (jn, un)),
                            mu_b], axis=2).reshape(jn * un, 2)

        trans_s = euler_multinomial(gen, s.reshape(-1), s_rates, dt)
        trans_e = euler_multinomial(gen, e.reshape(-1), e_rates, dt)
        trans_i = euler_multinomial(gen, i.reshape(-1), i_rates, dt)
        births = gen.poisson(births_rate[m] * dt, (jn, un))

        n_se = trans_s[:, 0].reshape(jn, un)
        n_sd = trans_s[:, 1].reshape(jn, un)
        n_ei = trans_e[:, 0].reshape(jn, un)
        n_ed = trans_e[:, 1].reshape(jn, un)
        n_ir = trans_i[:, 0].reshape(jn, un)
        n_id = trans_i[:, 1].reshape(jn, un)

        state[:, :, 0] = s + births - n_se - n_sd
        state[:, :, 1] = e + n_se - n_ei - n_ed
        state[:, :, 2] = i + n_ei - n_ir - n_id
        state[:, :, 3] = pop[m + 1] - state[:, :, 0] - state[:, :, 1] \
            - state[:, :, 2]
        state[:, :, 4] += n_ir
        with np.errstate(invalid="ignore", divide="ignore"):
            w_inc = np.where(sigma_se[:, None] > 0.0,
                             (dw - dt) / sigma_se[:, None], 0.0)
        state[:, :, 5] += w_inc
