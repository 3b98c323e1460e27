"""Maximum-likelihood inference and profile tooling."""

from .iterated import SearchResult, ienkf, igirf, iubf
from .perturb import CoolingSchedule, PerturbationSpec, ThetaSwarm
from .profile import McapResult, ProfileDesign, logmeanexp, mcap, profile_design

__all__ = [
    "CoolingSchedule",
    "McapResult",
    "PerturbationSpec",
    "ProfileDesign",
    "SearchResult",
    "ThetaSwarm",
    "ienkf",
    "igirf",
    "iubf",
    "logmeanexp",
    "mcap",
    "profile_design",
]
