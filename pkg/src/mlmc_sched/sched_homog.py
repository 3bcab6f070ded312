"""Homogeneous bulk-synchronous scheduling.

All concurrent samples run on one level with equal block sizes; levels are
processed one after another. The only decision per level is the scale
exponent theta. Three selectors are provided: the deterministic minimizer
of k_seq * t (used by the sample- and level-synchronous variants), and a
run-time robust selector that minimizes a simulated expected makespan under
a stochastic cost-factor histogram.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .perf import (
    InfeasibleConfiguration,
    MachineConfig,
    RunTimeModel,
    RuntimeFactorDistribution,
    level_metrics,
)
from .streams import RandomStream

__all__ = [
    "ThetaChoice",
    "StaticSchedule",
    "LevelBlockPlan",
    "select_theta",
    "expected_makespan",
    "select_theta_robust",
    "build_static_schedule",
]


@dataclass(frozen=True)
class ThetaChoice:
    """Per-level scale exponents plus the times the selector predicted."""

    thetas: tuple[int, ...]
    mode: str  # sample-sync | level-sync | robust
    predicted_times: tuple[float, ...]

    @property
    def total_predicted(self) -> float:
        return sum(self.predicted_times)

    def to_json(self, **kwargs) -> str:
        return json.dumps(
            {
                "mode": self.mode,
                "thetas": list(self.thetas),
                "predicted_times": [float(t) for t in self.predicted_times],
                "total_predicted": float(self.total_predicted),
            },
            **kwargs,
        )


def _feasible_thetas(machine: MachineConfig, level: int):
    out = [t for t in range(machine.s_window + 1) if machine.is_feasible(level, t)]
    if not out:
        raise InfeasibleConfiguration(
            f"no feasible theta on level {level} for p_max={machine.p_max}"
        )
    return out


def select_theta(level: int, n_samples: int, machine: MachineConfig, model: RunTimeModel) -> int:
    """Largest theta minimizing k_seq(theta) * t(level, theta)."""
    best_theta = None
    best_value = math.inf
    for theta in _feasible_thetas(machine, level):
        m = level_metrics(machine, level, n_samples, theta, model)
        value = m.k_seq * model.time(level, theta)
        if value <= best_value:
            best_value = value
            best_theta = theta
    return best_theta


def expected_makespan(
    level: int,
    theta: int,
    machine: MachineConfig,
    model: RunTimeModel,
    n_samples: int,
    dist: RuntimeFactorDistribution,
    mu: int,
    stream: RandomStream,
) -> float:
    """Monte Carlo estimate of the level makespan without step barriers.

    Averages over ``mu`` replications the maximum over the J blocks of the
    sum of k_seq drawn cost factors, scaled by the reference time.
    """
    if mu < 1:
        raise ValueError("mu must be >= 1")
    m = level_metrics(machine, level, n_samples, theta, model)
    t = model.time(level, theta)
    if dist.is_constant:
        return m.k_seq * t
    rng = stream.generator()
    if dist.kind == "empirical":
        factors = dist.normalized_factors()
        draws = factors[rng.integers(0, len(factors), size=(mu, m.j_parallel, m.k_seq))]
    else:
        draws = 1.0 + np.abs(rng.normal(0.0, math.sqrt(dist.var_param), size=(mu, m.j_parallel, m.k_seq)))
    block_sums = draws.sum(axis=2)
    return float(block_sums.max(axis=1).mean()) * t


def select_theta_robust(
    level: int,
    n_samples: int,
    machine: MachineConfig,
    model: RunTimeModel,
    dist: RuntimeFactorDistribution,
    stream: RandomStream,
    mu_start: int = 64,
    mu_cap: int = 512,
) -> int:
    """Theta minimizing the simulated expected makespan.

    The replication count mu doubles from ``mu_start`` until two successive
    counts select the same theta (capped at ``mu_cap``); with a constant
    factor distribution this reduces exactly to :func:`select_theta`.
    """
    if dist.is_constant:
        return select_theta(level, n_samples, machine, model)

    def argmin_for(mu: int) -> int:
        best_theta, best_value = None, math.inf
        for theta in _feasible_thetas(machine, level):
            value = expected_makespan(
                level, theta, machine, model, n_samples, dist, mu, stream.split(level, theta, mu)
            )
            if value <= best_value:
                best_value = value
                best_theta = theta
        return best_theta

    mu = mu_start
    prev = argmin_for(mu)
    while mu * 2 <= mu_cap:
        mu *= 2
        cur = argmin_for(mu)
        if cur == prev:
            return cur
        prev = cur
    return prev


def choose_thetas(
    n_per_level,
    machine: MachineConfig,
    model: RunTimeModel,
    mode: str = "level-sync",
    dist: RuntimeFactorDistribution | None = None,
    stream: RandomStream | None = None,
    mu_start: int = 64,
    mu_cap: int = 512,
) -> ThetaChoice:
    """Run the per-level selector for every level and collect predictions."""
    thetas = []
    times = []
    for level, n in enumerate(n_per_level):
        if mode == "robust":
            if dist is None or stream is None:
                raise ValueError("robust selection needs a factor distribution and a stream")
            theta = select_theta_robust(
                level, n, machine, model, dist, stream.split("robust"), mu_start, mu_cap
            )
        else:
            theta = select_theta(level, n, machine, model)
        m = level_metrics(machine, level, n, theta, model)
        thetas.append(theta)
        times.append(m.k_seq * model.time(level, theta))
    return ThetaChoice(tuple(thetas), mode, tuple(times))


@dataclass(frozen=True)
class LevelBlockPlan:
    level: int
    theta: int
    procs_per_block: int
    j_blocks: int
    k_seq: int
    n_target: int

    @property
    def computed(self) -> int:
        return self.j_blocks * self.k_seq

    @property
    def oversampling(self) -> int:
        return self.computed - self.n_target

    def sample_index(self, block: int, step: int) -> int:
        # step-by-step (column-major) assignment across blocks
        return step * self.j_blocks + block


@dataclass(frozen=True)
class StaticSchedule:
    """Fixed block layout: J blocks times k_seq steps on every level."""

    plans: tuple[LevelBlockPlan, ...]
    sync_mode: str  # sample-sync | level-sync

    @property
    def total_oversampling(self) -> int:
        return sum(p.oversampling for p in self.plans)

    def predicted_makespan(self, model: RunTimeModel) -> float:
        return sum(p.k_seq * model.time(p.level, p.theta) for p in self.plans)

    def to_json(self, **kwargs) -> str:
        doc = {
            "sync_mode": self.sync_mode,
            "levels": [
                {
                    "level": p.level,
                    "theta": p.theta,
                    "procs_per_block": p.procs_per_block,
                    "j_blocks": p.j_blocks,
                    "k_seq": p.k_seq,
                    "n_target": p.n_target,
                    "oversampling": p.oversampling,
                }
                for p in self.plans
            ],
        }
        return json.dumps(doc, **kwargs)

    @classmethod
    def from_dict(cls, doc: dict) -> "StaticSchedule":
        plans = tuple(
            LevelBlockPlan(
                level=e["level"],
                theta=e["theta"],
                procs_per_block=e["procs_per_block"],
                j_blocks=e["j_blocks"],
                k_seq=e["k_seq"],
                n_target=e["n_target"],
            )
            for e in doc["levels"]
        )
        return cls(plans, doc.get("sync_mode", "level-sync"))


def build_static_schedule(
    choices: ThetaChoice, n_per_level, machine: MachineConfig
) -> StaticSchedule:
    """Group processors into equal blocks per level following the choices."""
    if len(choices.thetas) != len(n_per_level):
        raise ValueError("theta choice and sample counts disagree on level count")
    plans = []
    for level, (theta, n) in enumerate(zip(choices.thetas, n_per_level)):
        procs = machine.procs_per_sample(level, theta)
        if procs > machine.p_max:
            raise InfeasibleConfiguration(f"level {level} theta {theta} infeasible")
        j = machine.p_max // procs
        k_seq = -(-n // j)
        plans.append(LevelBlockPlan(level, theta, procs, j, k_seq, n))
    sync = "sample-sync" if choices.mode == "sample-sync" else "level-sync"
    return StaticSchedule(tuple(plans), sync)
