"""Likelihood evaluation and filtering for SpatPOMP models."""

from .abf import abf, nbhd_full, nbhd_lagged
from .basic import bpfilter, make_blocks, pfilter
from .common import FilterResult, skeleton_path, skeleton_trajectory
from .enkf import enkf
from .girf import girf, girf_discount

__all__ = [
    "FilterResult",
    "abf",
    "bpfilter",
    "enkf",
    "girf",
    "girf_discount",
    "make_blocks",
    "nbhd_full",
    "nbhd_lagged",
    "pfilter",
    "skeleton_path",
    "skeleton_trajectory",
]
