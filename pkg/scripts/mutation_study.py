#!/usr/bin/env python3
"""Long-budget comparison of the five mutation operators.

Sweeps the evaluation budget (1k/4k/16k/64k by default) over ten seeds per
operator and prints min/avg/max of the best makespans. Expect roughly
half an hour at full budgets;
pass smaller budgets as arguments for a quick look, e.g.

    python scripts/mutation_study.py 1000 4000
"""

import sys

from mlmc_sched.perf import MachineConfig
from mlmc_sched.sched_hetero import (
    MUTATION_OPERATORS,
    HeteroProblem,
    SaConfig,
    initial_guess_s0,
    sa_study,
)
from mlmc_sched.scenarios import REFERENCE_T_MATRIX, TABLE_N


def study(budgets, seeds=10, jobs=1):
    machine = MachineConfig(p_max=8192, p0_min=1, s_window=4)
    problem = HeteroProblem(machine, TABLE_N, REFERENCE_T_MATRIX)
    start, _ = initial_guess_s0(TABLE_N, [r[0] for r in REFERENCE_T_MATRIX], machine)
    header = "operator      " + "".join(f"{b:>24}" for b in budgets)
    print(header)
    print("-" * len(header))
    for op in MUTATION_OPERATORS:
        cells = []
        for budget in budgets:
            results = sa_study(
                start, SaConfig(budget=budget, mutation=op), problem,
                seeds=range(seeds), jobs=jobs,
            )
            mks = sorted(r.best_objective.makespan for r in results)
            cells.append(f"{mks[0]:7.1f},{sum(mks)/len(mks):7.1f},{mks[-1]:7.1f}")
        print(f"{op:13s} " + "".join(f"{c:>24}" for c in cells))


if __name__ == "__main__":
    budgets = [int(v) for v in sys.argv[1:]] or [1000, 4000, 16000, 64000]
    study(budgets)
