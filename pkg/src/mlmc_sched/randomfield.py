"""Lognormal coefficient sampling through the Whittle equation.

A mean-free Gaussian field with exponential covariance is obtained by
solving (kappa^2 - Laplace) Z = white noise on the enlarged box (-1,2)^3
with natural (homogeneous Neumann) boundary conditions, then rescaling to
the target point variance: the native variance of the solution is
(8 pi kappa)^(-1) with correlation length 2/kappa. White noise is realized
through the lumped mass matrix, b_j = sqrt(m_j) z_j, which reproduces
Var(b_j) = m_j exactly. The Helmholtz operator has constant coefficients,
so its multigrid ladder is assembled once per level and shared.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grids import GridHierarchy, VertexField
from .multigrid import CycleSpec, SolveDiverged, assemble_mass, build_ladder, fmg, v_cycle
from .streams import RandomStream

__all__ = ["CovarianceParams", "FieldSampler", "sample_white_noise", "sample_log_coefficient"]


@dataclass(frozen=True)
class CovarianceParams:
    """Target variance and correlation length of the log field.

    ``lam`` is the e-folding length of the exponential covariance
    sigma^2 exp(-r/lam), which pins the operator parameter to
    kappa = 1/lam: the solution of (kappa^2 - Laplace) Z = W in 3D decays
    like exp(-kappa r). (The frequently quoted 2/kappa is the Matern range
    parameter sqrt(8 nu)/kappa, the distance of ~0.14 correlation, not the
    e-folding length.)
    """

    sigma2: float = 1.0
    lam: float = 0.2

    def __post_init__(self) -> None:
        if self.sigma2 <= 0 or self.lam <= 0:
            raise ValueError("sigma2 and lambda must be positive")

    @property
    def kappa(self) -> float:
        return 1.0 / self.lam

    @property
    def native_sigma2(self) -> float:
        return 1.0 / (8.0 * math.pi * self.kappa)

    @property
    def rescale(self) -> float:
        return math.sqrt(self.sigma2 / self.native_sigma2)


def sample_white_noise(
    mass: np.ndarray, stream: RandomStream, variance_scale: float = 1.0
) -> np.ndarray:
    """White-noise load vector b_j = sqrt(m_j) z_j (Var b_j = m_j)."""
    if variance_scale == 0.0:
        return np.zeros_like(mass)
    z = stream.generator().standard_normal(mass.shape)
    return np.sqrt(mass * variance_scale) * z


class FieldSampler:
    """Draws Gaussian / lognormal coefficient fields on the D grids."""

    def __init__(
        self,
        hier: GridHierarchy,
        params: CovarianceParams,
        cycle: CycleSpec | None = None,
        refine_tol: float = 1.0e-5,
        max_refine_cycles: int = 20,
    ):
        self.hier = hier
        self.params = params
        self.cycle = cycle or CycleSpec(kind="FMG", v_per_level=2, pre_smooth=4, post_smooth=4)
        self.refine_tol = refine_tol
        self.max_refine_cycles = max_refine_cycles
        self._ladders: dict[int, list] = {}
        self._masses: dict[int, np.ndarray] = {}

    def _ladder(self, level: int) -> list:
        if level not in self._ladders:
            self._ladders[level] = build_ladder(
                self.hier.ladder(level, "embedded"),
                self.hier.h(level),
                1.0,
                dirichlet=False,
                lumped_shift=self.params.kappa**2,
            )
        return self._ladders[level]

    def mass(self, level: int) -> np.ndarray:
        if level not in self._masses:
            self._masses[level] = assemble_mass(
                self.hier.cells(level, "embedded"), self.hier.h(level)
            )
        return self._masses[level]

    def _solve(self, level: int, b: np.ndarray) -> np.ndarray:
        ops = self._ladder(level)
        u = fmg(ops, b, self.cycle)
        top = ops[-1]
        r0 = float(np.linalg.norm(b))
        if r0 == 0.0:
            return u
        growth = 0
        prev = float(np.linalg.norm(top.residual(u, b)))
        for _ in range(self.max_refine_cycles):
            if prev <= self.refine_tol * r0:
                break
            u = v_cycle(ops, len(ops) - 1, u, b, self.cycle)
            r = float(np.linalg.norm(top.residual(u, b)))
            growth = growth + 1 if r > prev else 0
            if growth >= 3:
                raise SolveDiverged("field solve diverged")
            prev = r
        return u

    def gaussian_field(
        self, level: int, stream: RandomStream, variance_scale: float = 1.0
    ) -> VertexField:
        """Mean-free field with the target covariance, on D at ``level``."""
        if level > self.hier.max_level:
            raise ValueError(f"level {level} above hierarchy maximum")
        b = sample_white_noise(self.mass(level), stream, variance_scale)
        z = self._solve(level, b) * self.params.rescale
        window = z[self.hier.embed_slice(level)].copy()
        return self.hier.field(level, "D", window)

    def log_coefficient(
        self, level: int, stream: RandomStream, variance_scale: float = 1.0
    ) -> VertexField:
        z = self.gaussian_field(level, stream, variance_scale)
        return VertexField(level, "D", np.exp(z.values))


def sample_log_coefficient(
    hier: GridHierarchy, level: int, params: CovarianceParams, stream: RandomStream
) -> VertexField:
    """One lognormal coefficient sample via a throwaway sampler.

    Prefer a shared :class:`FieldSampler` in loops; it caches the
    constant-coefficient operator ladders.
    """
    return FieldSampler(hier, params).log_coefficient(level, stream)
