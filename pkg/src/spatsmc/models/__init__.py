"""Built-in benchmark models."""

from .bm import bm_build, bm_to_lgspec, circle_distance
from .measles import measles_build, measles_default_params

__all__ = [
    "bm_build",
    "bm_to_lgspec",
    "circle_distance",
    "measles_build",
    "measles_default_params",
]
