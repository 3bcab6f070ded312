"""Heterogeneous bulk-synchronous scheduling via simulated annealing.

A candidate is the integer matrix N[l][theta] of concurrent sample counts;
the sequential step counts are always derived from it by an exact per-level
minimization (the coupling runs in one direction only). Constraints:

  (a) 0 <= N[l][theta] <= p_max / (2^(3l+theta) p0_min)
  (b) every required level schedules at least one sample
  (c) total processor footprint <= p_max  (hard)

Candidates violating (b) or (c) are repaired, never rejected. The annealer
minimizes the makespan; the number of idle processors breaks ties (more
idle wins), which keeps the search moving across the large plateaus of
equal-makespan schedules.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .streams import RandomStream
from .perf import MachineConfig

__all__ = [
    "HeteroProblem",
    "ScheduleMatrix",
    "SaConfig",
    "Objective",
    "LevelSolve",
    "MUTATION_OPERATORS",
    "initial_guess_s0",
    "level_kseq_solve",
    "repair",
    "mutate",
    "objective",
    "sa_optimize",
    "sa_study",
]

MUTATION_OPERATORS = ("random-reset", "non-uniform", "gaussian", "hybrid-a", "hybrid-b")

Matrix = list[list[int]]


@dataclass(frozen=True)
class HeteroProblem:
    """Scheduling instance: machine, required sample counts, reference times."""

    machine: MachineConfig
    n_per_level: tuple[int, ...]
    t_matrix: tuple[tuple[float, ...], ...]  # [level][theta], theta = 0..S
    required: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if len(self.t_matrix) != len(self.n_per_level):
            raise ValueError("t_matrix and n_per_level disagree on level count")
        if len(self.t_matrix[0]) != self.machine.s_window + 1:
            raise ValueError("t_matrix must have s_window + 1 columns")
        object.__setattr__(self, "n_per_level", tuple(int(n) for n in self.n_per_level))
        object.__setattr__(
            self, "t_matrix", tuple(tuple(float(t) for t in row) for row in self.t_matrix)
        )
        if not self.required:
            object.__setattr__(self, "required", tuple(range(len(self.n_per_level))))

    @property
    def levels(self) -> int:
        return len(self.n_per_level)

    @property
    def s(self) -> int:
        return self.machine.s_window

    def bound(self, level: int, theta: int) -> int:
        return self.machine.p_max // self.machine.procs_per_sample(level, theta)

    def usage(self, n_par: Matrix) -> int:
        m = self.machine
        return sum(
            n_par[l][t] * m.procs_per_sample(l, t)
            for l in range(self.levels)
            for t in range(self.s + 1)
        )

    def min_footprint(self) -> int:
        return sum(self.machine.procs_per_sample(l, 0) for l in self.required)


@dataclass(frozen=True)
class ScheduleMatrix:
    """Concurrent sample counts and derived sequential step counts."""

    n_par: tuple[tuple[int, ...], ...]
    k_seq: tuple[tuple[int, ...], ...]
    makespan: float
    processors_used: int

    def to_json(self, **kwargs) -> str:
        return json.dumps(
            {
                "n_par": [list(r) for r in self.n_par],
                "k_seq": [list(r) for r in self.k_seq],
                "makespan": self.makespan,
                "processors_used": self.processors_used,
            },
            **kwargs,
        )

    @classmethod
    def from_dict(cls, doc: dict) -> "ScheduleMatrix":
        return cls(
            tuple(tuple(int(v) for v in row) for row in doc["n_par"]),
            tuple(tuple(int(v) for v in row) for row in doc["k_seq"]),
            float(doc.get("makespan", 0.0)),
            int(doc.get("processors_used", 0)),
        )


@dataclass(frozen=True)
class Objective:
    makespan: float
    idle_processors: int

    def better_than(self, other: "Objective") -> bool:
        if self.makespan != other.makespan:
            return self.makespan < other.makespan
        return self.idle_processors > other.idle_processors


@dataclass(frozen=True)
class LevelSolve:
    k_seq: tuple[int, ...]
    makespan: float
    computed: int


def _count(t_total: float, t_one: float) -> int:
    # floor with a guard against m*t/t landing just below m
    r = t_total / t_one
    return int(r + 1e-9 + 1e-12 * r)


def level_kseq_solve(n_par_row, t_row, n_target: int) -> LevelSolve:
    """Exact minimal level makespan over integer step counts.

    Candidate makespans are multiples of the per-theta times; the smallest
    feasible one is located by bisection, then individual step counts are
    greedily decremented to cut oversampling (never the makespan).
    """
    n_row = [int(v) for v in n_par_row]
    t = [float(v) for v in t_row]
    active = [i for i, v in enumerate(n_row) if v > 0]
    if not active:
        raise ValueError("no concurrent samples scheduled on a required level")
    if n_target <= 0:
        return LevelSolve(tuple(0 for _ in n_row), 0.0, 0)

    if len(active) == 1:
        i = active[0]
        k = -(-n_target // n_row[i])
        ks = [0] * len(n_row)
        ks[i] = k
        return LevelSolve(tuple(ks), k * t[i], k * n_row[i])

    t_ub = min(t[i] * (-(-n_target // n_row[i])) for i in active)

    def feasible(total: float) -> bool:
        got = 0
        for i in active:
            got += n_row[i] * _count(total, t[i])
        return got >= n_target

    candidates = sorted(
        {m * t[i] for i in active for m in range(1, _count(t_ub, t[i]) + 1)}
    )
    lo, hi = 0, len(candidates) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if feasible(candidates[mid]):
            hi = mid
        else:
            lo = mid + 1
    t_star = candidates[lo]

    ks = [0] * len(n_row)
    for i in active:
        ks[i] = _count(t_star, t[i])
    slack = sum(n_row[i] * ks[i] for i in active) - n_target
    for i in reversed(active):
        if slack <= 0:
            break
        drop = min(ks[i], slack // n_row[i])
        ks[i] -= drop
        slack -= drop * n_row[i]
    makespan = max(ks[i] * t[i] for i in active)
    return LevelSolve(tuple(ks), makespan, sum(n_row[i] * ks[i] for i in active))


def repair(candidate: Matrix, problem: HeteroProblem) -> Matrix:
    """Force a candidate into the feasible set.

    Clamps each gene into its box, reinstates one theta=0 sample on
    required levels that went empty, then halves genes (theta = S down to
    0, cycling over levels) until the processor footprint fits.
    """
    if problem.min_footprint() > problem.machine.p_max:
        raise ValueError("machine too small for one sample per required level")
    levels, s = problem.levels, problem.s
    n = [
        [min(max(int(candidate[l][t]), 0), problem.bound(l, t)) for t in range(s + 1)]
        for l in range(levels)
    ]

    def fix_required() -> None:
        for l in problem.required:
            if sum(n[l]) == 0:
                n[l][0] = 1

    fix_required()
    while problem.usage(n) > problem.machine.p_max:
        for l in range(levels):
            for t in range(s, -1, -1):
                if n[l][t] == 0:
                    continue
                if t == 0 and l in problem.required and sum(n[l]) == n[l][0] == 1:
                    continue  # keep the last mandatory sample
                n[l][t] //= 2
                if problem.usage(n) <= problem.machine.p_max:
                    break
            else:
                continue
            break
        fix_required()
    return n


def objective(candidate: Matrix, problem: HeteroProblem) -> Objective:
    """Makespan (max level makespan) and idle processors of a candidate."""
    worst = Objective(math.inf, -1)
    makespan = 0.0
    for l in range(problem.levels):
        if sum(candidate[l]) == 0:
            if l in problem.required:
                return worst
            continue
        solve = level_kseq_solve(candidate[l], problem.t_matrix[l], problem.n_per_level[l])
        makespan = max(makespan, solve.makespan)
    return Objective(makespan, problem.machine.p_max - problem.usage(candidate))


def solve_schedule(candidate: Matrix, problem: HeteroProblem) -> ScheduleMatrix:
    """Full schedule (step counts per level) for a feasible candidate."""
    k_rows = []
    makespan = 0.0
    for l in range(problem.levels):
        if sum(candidate[l]) == 0:
            k_rows.append(tuple(0 for _ in candidate[l]))
            continue
        solve = level_kseq_solve(candidate[l], problem.t_matrix[l], problem.n_per_level[l])
        k_rows.append(solve.k_seq)
        makespan = max(makespan, solve.makespan)
    return ScheduleMatrix(
        tuple(tuple(row) for row in candidate),
        tuple(k_rows),
        makespan,
        problem.usage(candidate),
    )


def initial_guess_s0(n_per_level, t0_per_level, machine: MachineConfig) -> tuple[Matrix, float]:
    """Cheap theta=0 starting schedule: processors proportional to level work.

    Returns the candidate matrix (theta=0 column populated) and its
    makespan max_l t_l0 * ceil(N_l / N_l0). Levels floored to zero samples
    are repaired to one.
    """
    n = [int(v) for v in n_per_level]
    t0 = [float(v) for v in t0_per_level]
    if len(n) != len(t0):
        raise ValueError("n_per_level and t0_per_level must have equal length")
    if any(v <= 0 for v in n) or any(v <= 0 for v in t0):
        raise ValueError("inputs must be positive")
    denom = sum(n[i] * 2 ** (3 * i) * machine.p0_min * t0[i] for i in range(len(n)))
    s = machine.s_window
    cand: Matrix = [[0] * (s + 1) for _ in n]
    for l in range(len(n)):
        n_l0 = int(machine.p_max * n[l] * t0[l] / denom)
        cand[l][0] = max(1, n_l0)
    makespan = max(t0[l] * (-(-n[l] // cand[l][0])) for l in range(len(n)))
    return cand, makespan


@dataclass(frozen=True)
class SaConfig:
    """Annealer knobs. Temperature follows a geometric schedule per
    evaluation; the budget counts objective evaluations."""

    t0: float = 1.0e3
    cooling: float = 0.8
    budget: int = 4000
    mutation: str = "hybrid-b"
    mutation_rate: float | None = None  # None: 0.2, or 0.1 for the hybrids
    seeds: tuple[int, ...] = (0,)

    def __post_init__(self) -> None:
        if not 0 < self.cooling < 1:
            raise ValueError("cooling must be in (0, 1)")
        if self.budget < 0:
            raise ValueError("budget must be >= 0")
        if self.mutation not in MUTATION_OPERATORS:
            raise ValueError(f"unknown mutation operator {self.mutation!r}")

    @property
    def rate(self) -> float:
        if self.mutation_rate is not None:
            return self.mutation_rate
        return 0.1 if self.mutation.startswith("hybrid") else 0.2


def _gaussian_step(n: Matrix, problem: HeteroProblem, rate: float, rng: np.random.Generator) -> None:
    m = problem.machine
    for l in range(problem.levels):
        sigma = 0.1 * m.p_max / (2 ** (3 * l) * m.p0_min)
        for t in range(problem.s + 1):
            if rng.random() < rate:
                n[l][t] += round(rng.normal(0.0, sigma))


def _transfer_step(n: Matrix, problem: HeteroProblem, same_level: bool, rng: np.random.Generator) -> None:
    levels, s = problem.levels, problem.s
    l1 = int(rng.integers(0, levels))
    t1 = int(rng.integers(0, s + 1))
    if same_level:
        if s == 0:
            return
        l2 = l1
        t2 = int(rng.integers(0, s))
        if t2 >= t1:
            t2 += 1
    else:
        flat = int(rng.integers(0, levels * (s + 1) - 1))
        if flat >= l1 * (s + 1) + t1:
            flat += 1
        l2, t2 = divmod(flat, s + 1)
    if n[l1][t1] <= 0:
        return
    k = int(rng.integers(0, n[l1][t1]))
    n[l1][t1] -= k
    n[l2][t2] += int(k * 2.0 ** (t1 - t2) * 8.0 ** (l1 - l2))


def mutate(
    candidate: Matrix,
    operator: str,
    sa_step: int,
    budget: int,
    problem: HeteroProblem,
    rng: np.random.Generator,
    rate: float | None = None,
) -> Matrix:
    """Apply one mutation operator and repair the result."""
    if operator not in MUTATION_OPERATORS:
        raise ValueError(f"unknown mutation operator {operator!r}")
    if rate is None:
        rate = 0.1 if operator.startswith("hybrid") else 0.2
    n = [row[:] for row in candidate]
    if operator == "random-reset":
        for l in range(problem.levels):
            for t in range(problem.s + 1):
                if rng.random() < rate:
                    n[l][t] = int(rng.integers(0, problem.bound(l, t) + 1))
    elif operator == "non-uniform":
        # unit initial strength, decaying to zero over the annealing run
        strength = 1.0 - (sa_step / budget if budget > 0 else 0.0)
        for l in range(problem.levels):
            for t in range(problem.s + 1):
                if rng.random() < rate:
                    n[l][t] += round(rng.uniform(-strength, strength))
    elif operator == "gaussian":
        _gaussian_step(n, problem, rate, rng)
    else:
        _gaussian_step(n, problem, rate, rng)
        _transfer_step(n, problem, operator == "hybrid-b", rng)
    return repair(n, problem)


@dataclass
class SaResult:
    best: ScheduleMatrix
    best_objective: Objective
    trace: list[float]
    idle_trace: list[int] | None = None
    seed: int = 0

    def trace_csv(self, path) -> None:
        from pathlib import Path

        lines = ["iteration,best_makespan,best_idle"]
        idles = self.idle_trace or [0] * len(self.trace)
        for i, (mk, idle) in enumerate(zip(self.trace, idles)):
            lines.append(f"{i},{float(mk)!r},{idle}")
        Path(path).write_text("\n".join(lines) + "\n")


def sa_optimize(
    start: Matrix,
    config: SaConfig,
    problem: HeteroProblem,
    stream: RandomStream,
) -> SaResult:
    """Simulated annealing from a repaired start candidate.

    Acceptance: strictly better makespan always; equal makespan only with
    at least as many idle processors; worse makespan with probability
    exp(-delta/T). The best-so-far trace is non-increasing by construction.
    """
    rng = stream.generator()
    cur = repair(start, problem)
    cur_obj = objective(cur, problem)
    best, best_obj = cur, cur_obj
    trace: list[float] = []
    idle_trace: list[int] = []
    temp = config.t0
    for step in range(config.budget):
        cand = mutate(cur, config.mutation, step, config.budget, problem, rng, config.rate)
        obj = objective(cand, problem)
        if obj.makespan < cur_obj.makespan:
            accept = True
        elif obj.makespan == cur_obj.makespan:
            accept = obj.idle_processors >= cur_obj.idle_processors
        else:
            accept = rng.random() < math.exp(-(obj.makespan - cur_obj.makespan) / temp)
        if accept:
            cur, cur_obj = cand, obj
        if obj.better_than(best_obj):
            best, best_obj = cand, obj
        trace.append(best_obj.makespan)
        idle_trace.append(best_obj.idle_processors)
        temp *= config.cooling
    return SaResult(solve_schedule(best, problem), best_obj, trace, idle_trace)


def _run_seed(args):
    start, config, problem, seed = args
    result = sa_optimize(start, config, problem, RandomStream(seed, ("sa",)))
    result.seed = seed
    return result


def sa_study(
    start: Matrix,
    config: SaConfig,
    problem: HeteroProblem,
    seeds=None,
    jobs: int = 1,
) -> list[SaResult]:
    """Independent annealing replications, one per seed."""
    if seeds is None:
        seeds = config.seeds
    tasks = [(start, config, problem, int(seed)) for seed in seeds]
    if jobs <= 1 or len(tasks) < 2:
        return [_run_seed(t) for t in tasks]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return sorted(pool.map(_run_seed, tasks), key=lambda r: r.seed)
