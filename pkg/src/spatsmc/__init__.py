"""spatsmc: simulation, filtering and likelihood-based inference for
spatiotemporal partially observed Markov process models.

Plug-and-play throughout: every algorithm needs only a simulator of the
latent transitions plus unit-level measurement components, never transition
densities.  Ships correlated Brownian motion and coupled measles SEIR
benchmark models and an exact Kalman oracle for linear-Gaussian validation.
"""

from .filters import (FilterResult, abf, bpfilter, enkf, girf, make_blocks,
                      nbhd_full, nbhd_lagged, pfilter, skeleton_trajectory)
from .inference import (CoolingSchedule, McapResult, PerturbationSpec,
                        SearchResult, ienkf, igirf, iubf, logmeanexp, mcap,
                        profile_design)
from .kalman import KalmanResult, LinearGaussianSpec, kf_loglik
from .kernels import backend_name
from .model import (CovariateTable, ModelComponents, ObservationMatrix,
                    ParamTransform, SimResult, SpatPompModel, TimeGrid,
                    build_model, interpolate_covariates, simulate,
                    transform_params)
from .models import bm_build, bm_to_lgspec, measles_build
from .rng import RngStream
from .stochastics import mvn_draw, reulermultinom, rgammawn, systematic_resample

__version__ = "0.1.0"

__all__ = [
    "CoolingSchedule",
    "CovariateTable",
    "FilterResult",
    "KalmanResult",
    "LinearGaussianSpec",
    "McapResult",
    "ModelComponents",
    "ObservationMatrix",
    "ParamTransform",
    "PerturbationSpec",
    "RngStream",
    "SearchResult",
    "SimResult",
    "SpatPompModel",
    "TimeGrid",
    "abf",
    "backend_name",
    "bm_build",
    "bm_to_lgspec",
    "bpfilter",
    "build_model",
    "enkf",
    "girf",
    "ienkf",
    "igirf",
    "interpolate_covariates",
    "iubf",
    "kf_loglik",
    "logmeanexp",
    "make_blocks",
    "mcap",
    "measles_build",
    "mvn_draw",
    "nbhd_full",
    "nbhd_lagged",
    "pfilter",
    "profile_design",
    "reulermultinom",
    "rgammawn",
    "simulate",
    "skeleton_trajectory",
    "systematic_resample",
    "transform_params",
]
