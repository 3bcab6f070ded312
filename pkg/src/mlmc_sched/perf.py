"""Performance model for parallel multilevel sampling runs.

Holds the machine description, per-level reference run-times with an
Amdahl-style strong-scaling surrogate, stochastic run-time factor
distributions, and the derived per-level quantities (concurrent block
count, sequential steps, imbalance, efficiency) that every scheduling
strategy in this package is built on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .streams import RandomStream

__all__ = [
    "MachineConfig",
    "RuntimeFactorDistribution",
    "RunTimeModel",
    "LevelMetrics",
    "GapReport",
    "InfeasibleConfiguration",
    "surrogate_time",
    "strong_efficiency",
    "level_metrics",
    "theoretical_optimum",
    "imbalance_gap",
    "draw_cost_factor",
    "fit_serial_fraction",
    "load_time_matrix_csv",
    "load_histogram_csv",
]


class InfeasibleConfiguration(ValueError):
    """A (level, theta) pair demands more processors than the machine has."""


@dataclass(frozen=True)
class MachineConfig:
    """Processor budget and scalability window of the simulated machine.

    A sample on level ``l`` run at scale exponent ``theta`` occupies
    ``2**(3*l + theta) * p0_min`` processors; ``s_window`` is the largest
    admissible theta.
    """

    p_max: int
    p0_min: int = 1
    s_window: int = 4

    def __post_init__(self) -> None:
        if not (self.p_max >= self.p0_min >= 1):
            raise ValueError(f"need p_max >= p0_min >= 1, got {self.p_max}, {self.p0_min}")
        if self.s_window < 0:
            raise ValueError("s_window must be >= 0")

    def procs_per_sample(self, level: int, theta: int) -> int:
        return 2 ** (3 * level + theta) * self.p0_min

    def is_feasible(self, level: int, theta: int) -> bool:
        return self.procs_per_sample(level, theta) <= self.p_max


@dataclass(frozen=True)
class RuntimeFactorDistribution:
    """Stochastic per-sample run-time factor.

    kind ``constant``: factor 1 always.
    kind ``empirical``: factor ``t_j * K / sum(t)`` for an index j drawn
        uniformly from the K recorded run-times (sample mean exactly 1).
    kind ``half-normal``: factor ``1 + |N(0, var_param)|``; the reference
        time is then interpreted as the run-time of the mode.
    """

    kind: str = "constant"
    histogram: tuple[float, ...] = ()
    var_param: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in ("constant", "empirical", "half-normal"):
            raise ValueError(f"unknown factor distribution kind {self.kind!r}")
        if self.kind == "empirical":
            if len(self.histogram) == 0:
                raise ValueError("empirical factor distribution needs a nonempty histogram")
            if any(t <= 0 for t in self.histogram):
                raise ValueError("histogram entries must be positive run-times")
        if self.kind == "half-normal" and self.var_param < 0:
            raise ValueError("var_param must be >= 0")
        object.__setattr__(self, "histogram", tuple(float(t) for t in self.histogram))

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant" or (self.kind == "half-normal" and self.var_param == 0.0)

    def normalized_factors(self) -> np.ndarray:
        """Histogram scaled to sample mean one (empirical kind only)."""
        t = np.asarray(self.histogram, dtype=float)
        return t * (len(t) / t.sum())

    def mean_factor(self) -> float:
        if self.kind == "constant":
            return 1.0
        if self.kind == "empirical":
            return 1.0
        # mean of 1 + |N(0, Var)|
        return 1.0 + math.sqrt(2.0 * self.var_param / math.pi)


def draw_cost_factor(dist: RuntimeFactorDistribution, stream: RandomStream, size: int | None = None):
    """Draw iid run-time factors from ``dist`` using ``stream``."""
    n = 1 if size is None else size
    if dist.kind == "constant":
        out = np.ones(n)
    elif dist.kind == "empirical":
        rng = stream.generator()
        idx = rng.integers(0, len(dist.histogram), size=n)
        out = dist.normalized_factors()[idx]
    else:
        rng = stream.generator()
        out = 1.0 + np.abs(rng.normal(0.0, math.sqrt(dist.var_param), size=n))
    return float(out[0]) if size is None else out


def surrogate_time(t_l0: float, b: float, theta: int) -> float:
    """Predicted run-time at scale exponent ``theta`` from the serial fraction ``b``."""
    if t_l0 <= 0:
        raise ValueError(f"reference time must be positive, got {t_l0}")
    if not 0.0 <= b <= 1.0:
        raise ValueError(f"serial fraction must be in [0, 1], got {b}")
    if theta < 0:
        raise ValueError("theta must be >= 0")
    return t_l0 * (b + 2.0 ** (-theta) * (1.0 - b))


def strong_efficiency(t_l0: float, t_ltheta: float, theta: int) -> float:
    """Strong parallel efficiency t_l0 / (2^theta * t_ltheta)."""
    if t_l0 <= 0 or t_ltheta <= 0:
        raise ValueError("run-times must be positive")
    return t_l0 / (2.0**theta * t_ltheta)


@dataclass(frozen=True)
class RunTimeModel:
    """Reference run-times per (level, theta) plus the factor distribution.

    ``t_ref[l][theta]`` is the reference time-to-solution of one sample on
    level ``l`` with ``2**(3l+theta) * p0_min`` processors. Either measured
    values or the Amdahl surrogate generated by :meth:`from_surrogate`.
    """

    t_ref: tuple[tuple[float, ...], ...]
    serial_fraction_b: float = 0.0
    factor_dist: RuntimeFactorDistribution = field(default_factory=RuntimeFactorDistribution)

    def __post_init__(self) -> None:
        if not self.t_ref or any(len(row) == 0 for row in self.t_ref):
            raise ValueError("t_ref must have at least one level and one theta column")
        if any(t <= 0 for row in self.t_ref for t in row):
            raise ValueError("all reference times must be positive")
        if not 0.0 <= self.serial_fraction_b <= 1.0:
            raise ValueError("serial fraction must be in [0, 1]")
        object.__setattr__(self, "t_ref", tuple(tuple(float(t) for t in row) for row in self.t_ref))

    @property
    def levels(self) -> int:
        return len(self.t_ref)

    @property
    def thetas(self) -> int:
        return len(self.t_ref[0])

    def time(self, level: int, theta: int) -> float:
        return self.t_ref[level][theta]

    def efficiency(self, level: int, theta: int) -> float:
        return strong_efficiency(self.t_ref[level][0], self.t_ref[level][theta], theta)

    def scaled(self, c: float) -> "RunTimeModel":
        if c <= 0:
            raise ValueError("scale factor must be positive")
        return RunTimeModel(
            tuple(tuple(c * t for t in row) for row in self.t_ref),
            self.serial_fraction_b,
            self.factor_dist,
        )

    @classmethod
    def from_surrogate(
        cls,
        t0_per_level,
        b: float,
        s_window: int,
        factor_dist: RuntimeFactorDistribution | None = None,
    ) -> "RunTimeModel":
        rows = tuple(
            tuple(surrogate_time(t0, b, theta) for theta in range(s_window + 1))
            for t0 in t0_per_level
        )
        return cls(rows, b, factor_dist or RuntimeFactorDistribution())


@dataclass(frozen=True)
class LevelMetrics:
    """Derived schedule quantities for one (level, theta) configuration."""

    j_parallel: int
    k_seq: int
    imbalance: float
    eff: float
    eta: float


def level_metrics(
    machine: MachineConfig,
    level: int,
    n_samples: int,
    theta: int,
    model: RunTimeModel,
    eff_override: float | None = None,
) -> LevelMetrics:
    """Blocks, sequential steps, imbalance and level efficiency for one level.

    ``eff_override`` substitutes an independently measured strong efficiency
    for the one derived from the model's time matrix (the two are distinct
    data sets and are never cross-derived).
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    procs = machine.procs_per_sample(level, theta)
    if procs > machine.p_max:
        raise InfeasibleConfiguration(
            f"level {level} theta {theta} needs {procs} > p_max {machine.p_max} processors"
        )
    j = machine.p_max // procs
    k_seq = -(-n_samples // j)  # ceil
    imbalance = 1.0 - (procs * n_samples) / (k_seq * machine.p_max)
    eff = model.efficiency(level, theta) if eff_override is None else eff_override
    return LevelMetrics(j, k_seq, imbalance, eff, (1.0 - imbalance) * eff)


def theoretical_optimum(
    machine: MachineConfig,
    n_per_level,
    t0_per_level,
    mean_factor=None,
) -> float:
    """Lower bound on the mean run-time: perfectly packed theta=0 work."""
    n = list(n_per_level)
    t0 = list(t0_per_level)
    if mean_factor is None:
        mean_factor = [1.0] * len(n)
    c = list(mean_factor)
    if not (len(n) == len(t0) == len(c)):
        raise ValueError("n_per_level, t0_per_level and mean_factor must have equal length")
    if any(v <= 0 for v in n) or any(v <= 0 for v in t0) or any(v <= 0 for v in c):
        raise ValueError("all inputs must be positive")
    total = sum(n[l] * 2 ** (3 * l) * c[l] * t0[l] for l in range(len(n)))
    return machine.p0_min / machine.p_max * total


@dataclass(frozen=True)
class GapReport:
    """Relative distance of a schedule's run-time from the theoretical optimum."""

    delta: float
    bound: float

    @property
    def within_bound(self) -> bool:
        return self.delta <= self.bound + 1e-12


def imbalance_gap(
    machine: MachineConfig,
    runtime: float,
    optimum: float,
    n_per_level,
    t0_per_level,
) -> GapReport:
    """Delta-t = runtime/optimum - 1 and its a-priori bound.

    The bound (t_L0/t_00) * (L+1) / k_seq_global applies to homogeneous
    schedules with divisible processor counts, no run-time variation and
    reference times non-decreasing in the level.
    """
    if optimum <= 0:
        raise ValueError("optimum must be positive")
    n = list(n_per_level)
    t0 = list(t0_per_level)
    k_seq_global = (
        sum(n[l] * 2 ** (3 * l) for l in range(len(n))) * machine.p0_min / machine.p_max
    )
    bound = (max(t0) / min(t0)) * len(n) / k_seq_global
    return GapReport(runtime / optimum - 1.0, bound)


def fit_serial_fraction(measured) -> float:
    """Least-squares serial fraction from (theta, time) measurements.

    With a theta=0 measurement present, fits t/t0 against
    b + 2^-theta (1-b) over b in [0, 1]; otherwise fits the
    two-parameter form t = A + C 2^-theta and returns A/(A+C).
    """
    pts = [(int(th), float(t)) for th, t in measured]
    if len({th for th, _ in pts}) < 2:
        raise ValueError("need measurements at >= 2 distinct theta values")
    if any(t <= 0 for _, t in pts):
        raise ValueError("measured times must be positive")
    t0 = next((t for th, t in pts if th == 0), None)
    if t0 is not None:
        num = 0.0
        den = 0.0
        for th, t in pts:
            x = 2.0**-th
            num += (t / t0 - x) * (1.0 - x)
            den += (1.0 - x) ** 2
        b = num / den if den > 0 else 0.0
    else:
        x = np.array([2.0**-th for th, _ in pts])
        t = np.array([t for _, t in pts])
        design = np.column_stack([np.ones_like(x), x])
        (a, c), *_ = np.linalg.lstsq(design, t, rcond=None)
        b = a / (a + c) if a + c != 0 else 0.0
    return min(1.0, max(0.0, float(b)))


def load_time_matrix_csv(path: str | Path) -> tuple[tuple[float, ...], ...]:
    """Reference-time matrix: one row per level, one column per theta."""
    rows = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        rows.append(tuple(float(v) for v in line.split(",")))
    if not rows:
        raise ValueError(f"no data rows in {path}")
    if len({len(r) for r in rows}) != 1:
        raise ValueError(f"ragged time matrix in {path}")
    return tuple(rows)


def load_histogram_csv(path: str | Path) -> tuple[float, ...]:
    """Run-time histogram: one observed time per line."""
    values = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        values.append(float(line))
    if not values:
        raise ValueError(f"no histogram entries in {path}")
    return tuple(values)
