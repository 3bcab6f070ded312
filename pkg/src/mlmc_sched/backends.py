"""Sample backends: the contract shared by the estimator and the schedulers.

A backend turns (level, sample index, root stream) into one correction
sample Y_l = Q_l - Q_{l-1} (Y_0 = Q_0). The synthetic backend realizes the
assumed geometric decay of means, variances and costs in closed form and is
the workhorse for fast verification; the PDE backend lives in ``pde``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Protocol

from .perf import RuntimeFactorDistribution, draw_cost_factor
from .streams import RandomStream

__all__ = [
    "SampleRecord",
    "SampleFailed",
    "SyntheticRates",
    "SyntheticBackend",
    "SampleBackend",
    "synthetic_sample",
    "records_to_csv",
]


class SampleFailed(RuntimeError):
    """A backend could not produce a sample (e.g. solver divergence)."""


@dataclass(frozen=True)
class SampleRecord:
    level: int
    index: int
    y_value: float
    q_fine: float
    duration: float
    stream_id: str

    def __post_init__(self) -> None:
        if self.level == 0 and self.y_value != self.q_fine:
            raise ValueError("on level 0 the correction value is the fine value itself")
        if self.duration <= 0:
            raise ValueError("duration must be positive")


class SampleBackend(Protocol):
    max_level: int

    def draw(self, level: int, index: int, root: RandomStream) -> SampleRecord: ...


@dataclass(frozen=True)
class SyntheticRates:
    """Closed-form level statistics: E[Y_l], V[Y_l] and cost follow
    c_b 8^(-alpha l), c_v 8^(-beta l) and c_c 8^(gamma l)."""

    alpha: float = 1.0 / 3.0
    beta: float = 2.0 / 3.0
    gamma: float = 1.0
    c_b: float = 0.1
    c_v: float = 0.01
    c_c: float = 1.0
    q_limit: float = 1.0
    noise_kind: str = "gaussian"

    def __post_init__(self) -> None:
        if not (0 < self.beta <= 2 * self.alpha):
            raise ValueError("rates must satisfy 0 < beta <= 2*alpha")
        if self.gamma < 1:
            raise ValueError("gamma must be >= 1")
        if self.noise_kind not in ("gaussian", "uniform"):
            raise ValueError(f"unknown noise kind {self.noise_kind!r}")

    def mean_q(self, level: int) -> float:
        return self.q_limit + self.c_b * 8.0 ** (-self.alpha * level)

    def mean_y(self, level: int) -> float:
        if level == 0:
            return self.mean_q(0)
        return self.c_b * (8.0 ** (-self.alpha * level) - 8.0 ** (-self.alpha * (level - 1)))

    def var_y(self, level: int) -> float:
        return self.c_v * 8.0 ** (-self.beta * level)

    def cost(self, level: int) -> float:
        return self.c_c * 8.0 ** (self.gamma * level)


@dataclass(frozen=True)
class SyntheticBackend:
    """Draws correction samples with the exact moments of ``SyntheticRates``."""

    rates: SyntheticRates = field(default_factory=SyntheticRates)
    factor_dist: RuntimeFactorDistribution = field(default_factory=RuntimeFactorDistribution)
    max_level: int = 16

    def _noise(self, stream: RandomStream) -> float:
        rng = stream.generator()
        if self.rates.noise_kind == "gaussian":
            return float(rng.standard_normal())
        # uniform with unit variance
        return float(rng.uniform(-(3.0**0.5), 3.0**0.5))

    def draw(self, level: int, index: int, root: RandomStream) -> SampleRecord:
        if not 0 <= level <= self.max_level:
            raise ValueError(f"level {level} outside backend range 0..{self.max_level}")
        stream = root.split(level, index)
        noise = self._noise(stream.split("noise"))
        y = self.rates.mean_y(level) + self.rates.var_y(level) ** 0.5 * noise
        factor = draw_cost_factor(self.factor_dist, stream.split("duration"))
        q_fine = y if level == 0 else self.rates.mean_q(level) + (y - self.rates.mean_y(level))
        return SampleRecord(
            level=level,
            index=index,
            y_value=y,
            q_fine=q_fine,
            duration=self.rates.cost(level) * factor,
            stream_id=f"{root.root_seed}/{level}/{index}",
        )


def synthetic_sample(
    level: int, rates: SyntheticRates, stream: RandomStream, index: int = 0
) -> SampleRecord:
    """One closed-form correction sample (module-level convenience)."""
    return SyntheticBackend(rates).draw(level, index, stream)


def records_to_csv(records: Iterable[SampleRecord], path: str | Path) -> Path:
    """Audit dump: one row per sample record."""
    path = Path(path)
    lines = ["level,index,y_value,q_fine,duration,stream_id"]
    for r in records:
        lines.append(
            f"{r.level},{r.index},{float(r.y_value)!r},{float(r.q_fine)!r},"
            f"{float(r.duration)!r},{r.stream_id}"
        )
    path.write_text("\n".join(lines) + "\n")
    return path
