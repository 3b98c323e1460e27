"""Bootstrap particle filter and block particle filter.

Both share one propagate/weight/resample loop; the bootstrap filter is the
single-block case, so bpfilter with one block reproduces pfilter exactly
under the same random stream.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from ..errors import ValidationError
from ..kernels import systematic_positions
from ..model import SpatPompModel
from ..rng import as_stream
from .common import (LOG_WEIGHT_FLOOR, FilterResult, component_params,
                     log_mean_exp_weights)

__all__ = ["pfilter", "bpfilter", "make_blocks"]


def make_blocks(n_units: int, block_size: Optional[int] = None,
                block_list: Optional[Sequence[Sequence[int]]] = None) -> list:
    """Partition 0..U-1 into blocks, by explicit list or contiguous size.

    block_size=2 on U=4 gives [[0, 1], [2, 3]] (unit indices are 0-based).
    """
    if (block_size is None) == (block_list is None):
        raise ValidationError("give exactly one of block_size or block_list")
    if block_list is not None:
        blocks = [np.asarray(sorted(b), dtype=np.intp) for b in block_list]
        flat = np.concatenate(blocks) if blocks else np.array([], dtype=np.intp)
        if sorted(flat.tolist()) != list(range(n_units)):
            raise ValidationError(
                "block_list must partition the units 0..U-1 exactly")
        return blocks
    if block_size < 1:
        raise ValidationError("block_size must be >= 1")
    return [np.arange(lo, min(lo + block_size, n_units), dtype=np.intp)
            for lo in range(0, n_units, block_size)]


def _run_block_filter(model: SpatPompModel, theta, j: int, blocks,
                      stream) -> FilterResult:
    comp = model.components
    comp.require("rinit", "dunit_measure")
    if comp.rprocess is None and comp.rprocess_bulk is None:
        comp.require("rprocess")
    gen = stream.child("process").generator

    x = np.asarray(comp.rinit(theta, model.covars_at(model.grid.t0), j, gen),
                   dtype=np.float64)
    n_times = model.n_times
    cond = np.zeros(n_times)
    n_failures = 0
    t_prev = model.grid.t0
    for n in range(n_times):
        t = model.grid.times[n]
        model.reset_accumulators(x)
        x = model.advance(x, t_prev, t, theta, gen)
        logd = model.unit_logdensity(model.obs.at_time(n), x, t, theta)
        logd = np.where(np.isnan(logd), -np.inf, logd)
        for k, block in enumerate(blocks):
            logw = logd[:, block].sum(axis=1)
            top = logw.max()
            if not np.isfinite(top) or top < LOG_WEIGHT_FLOOR:
                cond[n] += LOG_WEIGHT_FLOOR
                n_failures += 1
                continue  # keep ancestors for this block
            cond[n] += log_mean_exp_weights(logw)
            u = stream.child("resample", n, k).generator.random()
            idx = systematic_positions(np.exp(logw - top), u)
            x[:, block, :] = x[idx[:, None], block[None, :], :]
        t_prev = t

    return FilterResult(loglik=float(cond.sum()), cond_loglik=cond,
                        filter_particles=x, n_failures=n_failures)


def pfilter(model: SpatPompModel, params=None, j: int = 1000,
            rng=0) -> FilterResult:
    """Bootstrap particle filter: propagate, weight by the full measurement
    density, resample systematically; cond_loglik[n] = log mean weight."""
    theta = component_params(params if params is not None else model.params)
    blocks = [np.arange(model.n_units, dtype=np.intp)]
    return _run_block_filter(model, theta, int(j), blocks, as_stream(rng))


def bpfilter(model: SpatPompModel, params=None, j: int = 1000,
             block_size: Optional[int] = None,
             block_list: Optional[Sequence[Sequence[int]]] = None,
             rng=0) -> FilterResult:
    """Block particle filter: joint proposals, per-block weights and
    independent per-block resampling, pasting blocks back together."""
    theta = component_params(params if params is not None else model.params)
    blocks = make_blocks(model.n_units, block_size, block_list)
    return _run_block_filter(model, theta, int(j), blocks, as_stream(rng))
