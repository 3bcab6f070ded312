"""Multilevel Monte Carlo estimator mathematics and the adaptive loop.

Level statistics use the population variance s2 = (1/N) sum (y - mean)^2;
an unbiased (N-1) divisor is available as a switch but off by default.
Sample top-ups never discard previously computed samples: if the optimal
count for a level drops below what is already computed, the extra samples
stay in the statistics and merely reduce the variance.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

from .backends import SampleBackend, SampleRecord
from .streams import RandomStream

__all__ = [
    "ConvergenceRates",
    "Tolerance",
    "LevelStats",
    "MlmcResult",
    "CombineResult",
    "AdaptiveDidNotConverge",
    "SerialScheduler",
    "ProcessPoolScheduler",
    "BlockFillScheduler",
    "mc_statistics",
    "mlmc_combine",
    "optimal_sample_counts",
    "bias_estimate",
    "needs_new_level",
    "predict_epsilon_cost",
    "run_adaptive",
]


@dataclass(frozen=True)
class ConvergenceRates:
    """Assumed decay/growth rates: bias ~ M^-alpha, variance ~ M^-beta,
    cost ~ M^gamma, with M the number of unknowns per level."""

    alpha: float
    beta: float
    gamma: float
    c_b: float = 1.0
    c_v: float = 1.0
    c_c: float = 1.0

    def __post_init__(self) -> None:
        if not (0 < self.beta <= 2 * self.alpha):
            raise ValueError("need 0 < beta <= 2*alpha")
        if self.gamma < 1:
            raise ValueError("need gamma >= 1")
        if min(self.c_b, self.c_v, self.c_c) <= 0:
            raise ValueError("constants must be positive")


@dataclass(frozen=True)
class Tolerance:
    """Total RMSE target and the split between sampling and bias error.

    ``split_weight`` is the error-split weight (the sampling share of
    eps^2); it is deliberately not called theta to avoid a clash with the
    scale exponent used throughout the scheduling modules.
    """

    eps: float
    split_weight: float = 0.5

    def __post_init__(self) -> None:
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if not 0 < self.split_weight < 1:
            raise ValueError("split_weight must be in (0, 1)")

    @property
    def eps_s(self) -> float:
        return self.eps * math.sqrt(self.split_weight)

    @property
    def eps_b(self) -> float:
        return self.eps * math.sqrt(1.0 - self.split_weight)


@dataclass
class LevelStats:
    """Running statistics of one level's correction samples."""

    level: int
    values: list[float] = field(default_factory=list)
    durations: list[float] = field(default_factory=list)
    bessel: bool = False

    @property
    def n(self) -> int:
        return len(self.values)

    @property
    def mean(self) -> float:
        if self.n == 0:
            raise ValueError("no samples on level")
        return sum(self.values) / self.n

    @property
    def s2(self) -> float:
        if self.n == 0:
            raise ValueError("no samples on level")
        m = self.mean
        ss = sum((v - m) ** 2 for v in self.values)
        div = self.n - 1 if (self.bessel and self.n > 1) else self.n
        return ss / div

    @property
    def cost(self) -> float:
        if not self.durations:
            raise ValueError("no duration data on level")
        return sum(self.durations) / len(self.durations)

    def add(self, record: SampleRecord) -> None:
        self.values.append(record.y_value)
        self.durations.append(record.duration)

    def as_dict(self) -> dict:
        return {"level": self.level, "n": self.n, "mean": self.mean, "s2": self.s2, "cost": self.cost}


def mc_statistics(samples: Sequence[float], bessel: bool = False) -> tuple[float, float]:
    """Sample mean and (population) variance of a plain MC batch."""
    if len(samples) == 0:
        raise ValueError("need at least one sample")
    n = len(samples)
    mean = sum(samples) / n
    ss = sum((v - mean) ** 2 for v in samples)
    div = n - 1 if (bessel and n > 1) else n
    return mean, ss / div


@dataclass(frozen=True)
class CombineResult:
    estimate: float
    sampling_variance: float
    bias_squared: float | None = None

    @property
    def mse_estimate(self) -> float | None:
        if self.bias_squared is None:
            return None
        return self.bias_squared + self.sampling_variance


def mlmc_combine(levels: Sequence[LevelStats], alpha: float | None = None) -> CombineResult:
    """Telescoping sum of the level means, with the estimated MSE split."""
    if not levels or levels[0].level != 0:
        raise ValueError("level 0 statistics must be present")
    estimate = sum(ls.mean for ls in levels)
    var = sum(ls.s2 / ls.n for ls in levels)
    bias2 = None
    if alpha is not None:
        bias2 = bias_estimate(levels[-1].mean, alpha) ** 2
    return CombineResult(estimate, var, bias2)


def optimal_sample_counts(variances, costs, eps_s: float) -> list[int]:
    """Cost-optimal per-level sample counts for a sampling tolerance eps_s."""
    v = [float(x) for x in variances]
    c = [float(x) for x in costs]
    if len(v) != len(c):
        raise ValueError("variances and costs must have equal length")
    if any(x < 0 for x in v):
        raise ValueError("variances must be >= 0")
    if any(x <= 0 for x in c):
        raise ValueError("costs must be positive")
    if eps_s <= 0:
        raise ValueError("eps_s must be positive")
    total = sum(math.sqrt(vl * cl) for vl, cl in zip(v, c))
    return [
        max(1, math.ceil(eps_s**-2 * total * math.sqrt(vl / cl))) for vl, cl in zip(v, c)
    ]


def bias_estimate(y_hat_l: float, alpha: float) -> float:
    """Asymptotic bound on |E[Q_l - Q]| from the finest correction mean."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    return abs(y_hat_l) / (8.0**alpha - 1.0)


def needs_new_level(y_hat_l: float, alpha: float, eps_b: float) -> bool:
    """Whether the finest-level correction mean indicates too much bias."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    return abs(y_hat_l) > (8.0**alpha - 1.0) * eps_b


def predict_epsilon_cost(rates: ConvergenceRates, eps: float, estimator: str = "mlmc") -> tuple[float, float]:
    """Cost exponent r in Cost = O(eps^-r) and the order-of-magnitude cost."""
    if estimator == "mc":
        exponent = 2.0 + rates.gamma / rates.alpha
    elif estimator == "mlmc":
        exponent = 2.0 + max(0.0, (rates.gamma - rates.beta) / rates.alpha)
    else:
        raise ValueError(f"unknown estimator kind {estimator!r}")
    return exponent, eps**-exponent


# ---------------------------------------------------------------------------
# sample schedulers: decide which (level, index) pairs actually get computed


def _draw_one(args):
    backend, level, index, root = args
    return backend.draw(level, index, root)


class SerialScheduler:
    """Computes exactly the requested samples, one after the other."""

    def run(self, backend: SampleBackend, needs: dict[int, tuple[int, int]], root: RandomStream) -> list[SampleRecord]:
        records = []
        for level in sorted(needs):
            first, count = needs[level]
            for index in range(first, first + count):
                records.append(backend.draw(level, index, root))
        return records


class ProcessPoolScheduler:
    """Computes the requested samples on a process pool.

    Results are reduced in (level, index) order, so the estimate is
    identical to the serial scheduler's for any worker count.
    """

    def __init__(self, jobs: int):
        self.jobs = max(1, jobs)

    def run(self, backend: SampleBackend, needs: dict[int, tuple[int, int]], root: RandomStream) -> list[SampleRecord]:
        tasks = [
            (backend, level, index, root)
            for level in sorted(needs)
            for index in range(needs[level][0], needs[level][0] + needs[level][1])
        ]
        if self.jobs == 1 or len(tasks) < 2:
            records = [_draw_one(t) for t in tasks]
        else:
            with ProcessPoolExecutor(max_workers=self.jobs) as pool:
                records = list(pool.map(_draw_one, tasks, chunksize=8))
        return sorted(records, key=lambda r: (r.level, r.index))


class BlockFillScheduler:
    """Rounds each level's batch up to full blocks of a parallel machine.

    Mirrors a static bulk-synchronous execution: k_seq * J >= N samples are
    computed per level and the extras are kept in the statistics.
    """

    def __init__(self, machine, theta_policy=None):
        self.machine = machine
        # theta_policy: level -> theta; default theta = 0
        self.theta_policy = theta_policy or (lambda level: 0)

    def run(self, backend: SampleBackend, needs: dict[int, tuple[int, int]], root: RandomStream) -> list[SampleRecord]:
        records = []
        for level in sorted(needs):
            first, count = needs[level]
            theta = self.theta_policy(level)
            j = self.machine.p_max // self.machine.procs_per_sample(level, theta)
            if j < 1:
                raise ValueError(f"level {level} infeasible on this machine")
            k_seq = -(-count // j)
            for index in range(first, first + k_seq * j):
                records.append(backend.draw(level, index, root))
        return records


# ---------------------------------------------------------------------------
# the adaptive loop


@dataclass
class MlmcResult:
    estimate: float
    levels: list[LevelStats]
    final_n: list[int]
    final_l: int
    history: list[dict]
    truncated: bool = False

    def as_dict(self) -> dict:
        return {
            "estimate": self.estimate,
            "levels": [ls.as_dict() for ls in self.levels],
            "final_n": self.final_n,
            "final_l": self.final_l,
            "truncated": self.truncated,
            "history": self.history,
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.as_dict(), **kwargs)


class AdaptiveDidNotConverge(RuntimeError):
    def __init__(self, message: str, partial: MlmcResult):
        super().__init__(message)
        self.partial = partial


def run_adaptive(
    backend: SampleBackend,
    scheduler,
    tol: Tolerance,
    n_init: int = 16,
    rates: ConvergenceRates | None = None,
    *,
    root: RandomStream | None = None,
    alpha: float | None = None,
    max_iterations: int = 100,
    bessel: bool = False,
    adaptive_split: bool = False,
    initial_n: Sequence[int] | None = None,
) -> MlmcResult:
    """Adaptive MLMC: grow sample counts and levels until both error
    components are estimated below tolerance.

    Each iteration tops up samples to the current targets through the
    scheduler, re-estimates means/variances/costs, recomputes the optimal
    counts and tests whether a finer level is needed. ``adaptive_split``
    replaces the fixed eps_s by the finest correction mean (balancing the
    sampling error against the bias error) instead of the fixed split.
    ``initial_n`` seeds more than the default two levels with given counts.
    """
    if n_init < 2:
        raise ValueError("n_init must be >= 2")
    a = alpha if alpha is not None else (rates.alpha if rates is not None else None)
    if a is None:
        raise ValueError("need a bias rate alpha (directly or via rates)")
    if root is None:
        root = RandomStream(0)

    level_cap = backend.max_level
    truncated = False
    if initial_n is not None:
        if len(initial_n) - 1 > level_cap:
            raise ValueError("initial_n exceeds the backend's level range")
        current_l = len(initial_n) - 1
        targets = {l: max(2, int(n)) for l, n in enumerate(initial_n)}
    else:
        current_l = min(1, level_cap)
        targets = {l: n_init for l in range(current_l + 1)}
    stats: dict[int, LevelStats] = {
        l: LevelStats(l, bessel=bessel) for l in range(current_l + 1)
    }
    history: list[dict] = []

    for iteration in range(1, max_iterations + 1):
        needs = {}
        for l in range(current_l + 1):
            have = stats[l].n
            if targets[l] > have:
                needs[l] = (have, targets[l] - have)
        if needs:
            for rec in sorted(scheduler.run(backend, needs, root), key=lambda r: (r.level, r.index)):
                stats[rec.level].add(rec)

        y_hat_top = stats[current_l].mean
        eps_s = max(abs(y_hat_top), 1e-12) if adaptive_split else tol.eps_s
        quasi = optimal_sample_counts(
            [stats[l].s2 for l in range(current_l + 1)],
            [stats[l].cost for l in range(current_l + 1)],
            eps_s,
        )
        changed = False
        for l in range(current_l + 1):
            new_target = max(stats[l].n, quasi[l])
            if new_target > stats[l].n:
                changed = True
            targets[l] = new_target

        level_list = [stats[l] for l in range(current_l + 1)]
        combined = mlmc_combine(level_list, alpha=a)
        history.append(
            {
                "iteration": iteration,
                "levels": current_l + 1,
                "n": [stats[l].n for l in range(current_l + 1)],
                "targets": [targets[l] for l in range(current_l + 1)],
                "bias_estimate": bias_estimate(y_hat_top, a),
                "sampling_variance": combined.sampling_variance,
            }
        )

        if needs_new_level(y_hat_top, a, tol.eps_b):
            if current_l + 1 > level_cap:
                truncated = True
            else:
                current_l += 1
                stats[current_l] = LevelStats(current_l, bessel=bessel)
                targets[current_l] = n_init
                changed = True

        if not changed:
            return MlmcResult(
                estimate=combined.estimate,
                levels=level_list,
                final_n=[stats[l].n for l in range(current_l + 1)],
                final_l=current_l + 1,
                history=history,
                truncated=truncated,
            )

    level_list = [stats[l] for l in range(current_l + 1) if stats[l].n > 0]
    partial = MlmcResult(
        estimate=mlmc_combine(level_list).estimate,
        levels=level_list,
        final_n=[ls.n for ls in level_list],
        final_l=len(level_list),
        history=history,
        truncated=truncated,
    )
    raise AdaptiveDidNotConverge(
        f"no fixed point after {max_iterations} iterations", partial
    )
