"""Random-walk perturbation schedules for iterated filtering."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from ..errors import ValidationError
from ..model import SpatPompModel

__all__ = ["PerturbationSpec", "CoolingSchedule", "ThetaSwarm"]


@dataclass(frozen=True)
class CoolingSchedule:
    """Geometric cooling: perturbation sd shrinks by `fraction` per 50
    iterations (variance multiplier fraction^(2m/50) at iteration m)."""

    fraction: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.fraction <= 1.0:
            raise ValidationError("cooling fraction must be in (0, 1]")

    def sd_multiplier(self, m: int) -> float:
        return self.fraction ** (m / 50.0)

    def var_multiplier(self, m: int) -> float:
        return self.fraction ** (2.0 * m / 50.0)


@dataclass(frozen=True)
class PerturbationSpec:
    """Per-parameter random-walk sds on the estimation scale.

    Parameters flagged as IVPs are perturbed only at the start of each
    iteration; regular parameters at every filter (sub)step.  Parameters
    absent from ``sds`` get sd 0 (never perturbed).
    """

    sds: Mapping[str, float] = field(default_factory=dict)
    ivp_names: frozenset = frozenset()

    def __post_init__(self):
        for name, sd in self.sds.items():
            if sd < 0.0:
                raise ValidationError(f"rw sd for {name!r} must be >= 0")

    def validate_names(self, params: Mapping):
        unknown = [n for n in self.sds if n not in params]
        if unknown:
            raise ValidationError(
                "rw sds name unknown parameter(s): " + ", ".join(unknown))

    @property
    def perturbed_names(self) -> tuple:
        return tuple(n for n, sd in self.sds.items() if sd > 0.0)

    def regular(self) -> dict:
        return {n: sd for n, sd in self.sds.items()
                if sd > 0.0 and n not in self.ivp_names}

    def ivp(self) -> dict:
        return {n: sd for n, sd in self.sds.items()
                if sd > 0.0 and n in self.ivp_names}

    def sd_matrix(self, n_times: int, names) -> np.ndarray:
        """The implied (N+1, D) sd matrix: row 0 perturbs everything with a
        nonzero sd, rows 1..N only regular parameters."""
        names = list(names)
        out = np.zeros((n_times + 1, len(names)))
        for d, name in enumerate(names):
            sd = self.sds.get(name, 0.0)
            if sd <= 0.0:
                continue
            out[0, d] = sd
            if name not in self.ivp_names:
                out[1:, d] = sd
        return out


class ThetaSwarm:
    """Per-particle parameter vectors, perturbed on the estimation scale."""

    def __init__(self, model: SpatPompModel, theta0: Mapping, j: int,
                 perturbed_names):
        est = model.transform.to_est(dict(theta0))
        self._transform = model.transform
        self._fixed = {k: float(v) for k, v in est.items()
                       if k not in perturbed_names}
        self.est = {name: np.full(j, float(est[name]))
                    for name in perturbed_names}
        self.j = j

    def perturb(self, sds: Mapping[str, float], gen) -> None:
        for name, sd in sds.items():
            self.est[name] = self.est[name] + sd * gen.standard_normal(self.j)

    def take(self, idx) -> None:
        for name in self.est:
            self.est[name] = self.est[name][idx]

    def natural(self) -> dict:
        combined = dict(self._fixed)
        combined.update(self.est)
        return self._transform.from_est(combined)

    def mean_natural(self) -> dict:
        combined = dict(self._fixed)
        combined.update({k: float(v.mean()) for k, v in self.est.items()})
        return self._transform.from_est(combined)
