#!/usr/bin/env python3
"""Desk-scale PDE backend diagnostics.

Prints the V-cycle contraction history for the unit coefficient, the
correction-sample variance decay over the level hierarchy, and the field
statistics of the lognormal sampler (point variance and covariance decay).
Takes a few minutes with the default sample counts.
"""

import argparse
import math

import numpy as np

from mlmc_sched.grids import GridHierarchy
from mlmc_sched.multigrid import CycleSpec, build_ladder, v_cycle
from mlmc_sched.pde import PdeBackend, unit_load
from mlmc_sched.randomfield import CovarianceParams, FieldSampler
from mlmc_sched.streams import RandomStream


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--levels", type=int, default=3)
    ap.add_argument("--samples", type=int, default=100)
    ap.add_argument("--fields", type=int, default=200)
    ap.add_argument("--lam", type=float, default=0.2)
    ap.add_argument("--seed", type=int, default=20170825)
    args = ap.parse_args()

    hier = GridHierarchy(max_level=args.levels, n0=4)
    params = CovarianceParams(1.0, args.lam)
    backend = PdeBackend(hier, params)
    root = RandomStream(args.seed)

    print("== V-cycle contraction, k = 1, finest level ==")
    ops = build_ladder(hier.ladder(args.levels, "D"), hier.h(args.levels), 1.0, dirichlet=True)
    f = unit_load(hier, args.levels).values
    u = np.zeros_like(f)
    spec = CycleSpec(kind="V")
    prev = np.linalg.norm(ops[-1].residual(u, f))
    for cycle in range(8):
        u = v_cycle(ops, len(ops) - 1, u, f, spec)
        cur = np.linalg.norm(ops[-1].residual(u, f))
        print(f"  cycle {cycle}: residual {cur:.3e}  rate {cur / prev:.3f}")
        prev = cur

    print("== correction-sample variance decay ==")
    s2 = {}
    for level in range(1, args.levels + 1):
        ys = np.array(
            [backend.draw(level, i, root).y_value for i in range(args.samples)]
        )
        s2[level] = ys.var()
        print(f"  level {level}: mean {ys.mean():+.3e}  s2 {ys.var():.3e}")
    for level in range(1, args.levels):
        print(f"  s2 ratio level {level}/{level + 1}: {s2[level] / s2[level + 1]:.2f}")

    print("== field statistics ==")
    sampler = FieldSampler(hier, params)
    level = max(1, args.levels - 1)
    n = hier.vertices(level, "D")
    h = hier.h(level)
    fields = np.stack(
        [sampler.gaussian_field(level, root.split("f", i)).values for i in range(args.fields)]
    )
    print(f"  mean {fields.mean():+.4f}  point variance {fields.reshape(len(fields), -1).var(axis=0).mean():.4f}")
    for lag in range(1, min(8, n // 2)):
        prods = []
        for ax in range(3):
            a = np.take(fields, np.arange(0, n - lag), axis=1 + ax)
            b = np.take(fields, np.arange(lag, n), axis=1 + ax)
            prods.append((a * b).mean())
        print(
            f"  lag {lag} (r={lag * h:.4f}): cov {np.mean(prods):+.4f}"
            f"  model {math.exp(-lag * h / params.lam):.4f}"
        )


if __name__ == "__main__":
    main()
