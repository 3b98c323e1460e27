# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: fused loops over particles/units/substeps.

Same contracts as spatsmc.kernels.pure.  Random draws come from the same
numpy BitGenerator machinery (libnpyrandom), so each backend is exactly
reproducible under a fixed seed; the two backends consume the bit stream in
different orders and therefore agree in distribution, not draw-for-draw.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, expm1
from cpython.pycapsule cimport PyCapsule_GetPointer
from numpy.random cimport bitgen_t
from numpy.random.c_distributions cimport (
    binomial_t,
    random_binomial,
    random_poisson,
    random_standard_gamma,
)

cnp.import_array()

BACKEND = "compiled"

cdef double _GAMMA_DEGENERATE_SHAPE = 1e12


cdef bitgen_t *_bitgen(object gen):
    capsule = gen.bit_generator.capsule
    return <bitgen_t *> PyCapsule_GetPointer(capsule, "BitGenerator")


cdef inline long _draw_exits(bitgen_t *rng, binomial_t *binom, long size,
                             double r0, double r1, double dt,
                             long *n0, long *n1) noexcept nogil:
    # competing exits at rates (r0, r1): multinomial via conditional binomials
    cdef double total = r0 + r1
    cdef double p_exit, p0, p1, cond
    n0[0] = 0
    n1[0] = 0
    if size <= 0 or total <= 0.0:
        return 0
    p_exit = -expm1(-total * dt)
    p0 = r0 / total * p_exit
    p1 = r1 / total * p_exit
    n0[0] = random_binomial(rng, p0, size, binom)
    cond = p1 / (1.0 - p0)
    if cond > 1.0:
        cond = 1.0
    if cond > 0.0 and size - n0[0] > 0:
        n1[0] = random_binomial(rng, cond, size - n0[0], binom)
    return 0


def euler_multinomial(object gen, object sizes, object rates, double dt):
    """Element-major compiled twin of pure.euler_multinomial."""
    cdef cnp.ndarray[cnp.int64_t, ndim=1] sz = \
        np.ascontiguousarray(sizes, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] rt = \
        np.ascontiguousarray(rates, dtype=np.float64)
    cdef Py_ssize_t m = rt.shape[0], k = rt.shape[1]
    cdef cnp.ndarray[cnp.int64_t, ndim=2] out = np.zeros((m, k), dtype=np.int64)
    cdef bitgen_t *rng = _bitgen(gen)
    cdef binomial_t binom
    cdef Py_ssize_t i, j
    cdef double total, p_exit, pj, prob_left, cond
    cdef long remaining, cnt
    with gen.bit_generator.lock:
        for i in range(m):
            total = 0.0
            for j in range(k):
                total += rt[i, j]
            if sz[i] <= 0 or total <= 0.0:
                continue
            p_exit = -expm1(-total * dt)
            remaining = sz[i]
            prob_left = 1.0
            for j in range(k):
                pj = rt[i, j] / total * p_exit
                if prob_left > 0.0:
                    cond = pj / prob_left
                    if cond > 1.0:
                        cond = 1.0
                    if cond < 0.0:
                        cond = 0.0
                else:
                    cond = 0.0
                cnt = random_binomial(rng, cond, remaining, &binom)
                out[i, j] = cnt
                remaining -= cnt
                prob_left -= pj
    return out


def gamma_white_noise(object gen, object sigma, double dt, Py_ssize_t n):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] sig = np.ascontiguousarray(
        np.broadcast_to(np.asarray(sigma, dtype=np.float64), (n,)))
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.full(n, dt, dtype=np.float64)
    cdef bitgen_t *rng = _bitgen(gen)
    cdef Py_ssize_t i
    cdef double var, shape
    with gen.bit_generator.lock:
        for i in range(n):
            var = sig[i] * sig[i]
            if var > 0.0:
                shape = dt / var
                if shape < _GAMMA_DEGENERATE_SHAPE:
                    out[i] = random_standard_gamma(rng, shape) * var
    return out


def systematic_positions(object weights, double u):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] w = \
        np.ascontiguousarray(weights, dtype=np.float64)
    cdef Py_ssize_t j = w.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] out = np.empty(j, dtype=np.int64)
    cdef double total = 0.0
    cdef Py_ssize_t i, idx = 0
    cdef double cum, pos
    for i in range(j):
        total += w[i]
    cum = w[0]
    for i in range(j):
        pos = (u + i) / j * total
        while pos >= cum and idx < j - 1:
            idx += 1
            cum += w[idx]
        out[i] = idx
    return out


def measles_euler_sweep(object gen, cnp.ndarray[cnp.float64_t, ndim=3] state,
                        Py_ssize_t nsub, double dt,
                        cnp.ndarray[cnp.float64_t, ndim=2] pop,
                        cnp.ndarray[cnp.float64_t, ndim=2] births_rate,
                        cnp.ndarray[cnp.uint8_t, ndim=1] is_term,
                        cnp.ndarray[cnp.float64_t, ndim=1] r0,
                        cnp.ndarray[cnp.float64_t, ndim=1] amplitude,
                        cnp.ndarray[cnp.float64_t, ndim=1] gamma_rec,
                        cnp.ndarray[cnp.float64_t, ndim=1] sigma_lat,
                        cnp.ndarray[cnp.float64_t, ndim=1] mu,
                        cnp.ndarray[cnp.float64_t, ndim=1] sigma_se,
                        cnp.ndarray[cnp.float64_t, ndim=1] g,
                        cnp.ndarray[cnp.float64_t, ndim=2] v_by_g):
    cdef Py_ssize_t jn = state.shape[0], un = state.shape[1]
    cdef bitgen_t *rng = _bitgen(gen)
    cdef binomial_t binom
    cdef Py_ssize_t m, jj, u, v
    cdef double seas, beta, foi, dw, var, shape, rate_se, w_inc
    cdef long s, e, i_, births
    cdef long n_se, n_sd, n_ei, n_ed, n_ir, n_id
    cdef double p_u
    with gen.bit_generator.lock:
        for m in range(nsub):
            for jj in range(jn):
                seas = (1.0 + amplitude[jj] * (0.2411 / 0.7589)) if is_term[m] \
                    else (1.0 - amplitude[jj])
                beta = r0[jj] * (gamma_rec[jj] + mu[jj]) * seas
                for u in range(un):
                    p_u = pop[m, u]
                    foi = state[jj, u, 2] / p_u
                    for v in range(un):
                        if v != u:
                            foi += g[jj] * v_by_g[u, v] * (
                                state[jj, v, 2] / pop[m, v]
                                - state[jj, u, 2] / p_u) / p_u
                    var = sigma_se[jj] * sigma_se[jj]
                    dw = dt
                    if var > 0.0:
                        shape = dt / var
                        if shape < _GAMMA_DEGENERATE_SHAPE:
                            dw = random_standard_gamma(rng, shape) * var
                    rate_se = beta * foi * dw / dt

                    s = <long> state[jj, u, 0]
                    e = <long> state[jj, u, 1]
                    i_ = <long> state[jj, u, 2]
                    _draw_exits(rng, &binom, s, rate_se, mu[jj], dt,
                                &n_se, &n_sd)
                    _draw_exits(rng, &binom, e, sigma_lat[jj], mu[jj], dt,
                                &n_ei, &n_ed)
                    _draw_exits(rng, &binom, i_, gamma_rec[jj], mu[jj], dt,
                                &n_ir, &n_id)
                    births = random_poisson(rng, births_rate[m, u] * dt)

                    state[jj, u, 0] = s + births - n_se - n_sd
                    state[jj, u, 1] = e + n_se - n_ei - n_ed
                    state[jj, u, 2] = i_ + n_ei - n_ir - n_id
                    state[jj, u, 3] = pop[m + 1, u] - state[jj, u, 0] \
                        - state[jj, u, 1] - state[jj, u, 2]
                    state[jj, u, 4] += n_ir
                    if sigma_se[jj] > 0.0:
                        state[jj, u, 5] += (dw - dt) / sigma_se[jj]
    return None
