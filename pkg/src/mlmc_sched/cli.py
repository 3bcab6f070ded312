"""Command-line entry points.

    mlmc-sched run <scenario> [--config F] [--out DIR] [--seeds N]
                              [--budget N] [--jobs N] [--check]
    mlmc-sched schedule <problem.json> [--out FILE]
    mlmc-sched simulate <schedule.json> [--out FILE] [--timeline DIR]

Exit codes: 0 success, 2 acceptance-threshold violation under --check,
64 usage error. MLMC_SCHED_SEED overrides the root seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .machine_sim import ExecutionMode, export_timeline_csv, export_timeline_svg, simulate
from .perf import MachineConfig, RunTimeModel, RuntimeFactorDistribution
from .sched_hetero import (
    HeteroProblem,
    SaConfig,
    ScheduleMatrix,
    initial_guess_s0,
    sa_study,
)
from .sched_homog import StaticSchedule
from .scenarios import SCENARIO_NAMES, run_scenario
from .streams import RandomStream

USAGE_ERROR = 64
CHECK_FAILED = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(USAGE_ERROR)


def _build_parser() -> _Parser:
    parser = _Parser(prog="mlmc-sched", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a bundled scenario")
    run.add_argument("scenario", choices=SCENARIO_NAMES)
    run.add_argument("--config", type=Path, default=None)
    run.add_argument("--out", type=Path, default=None)
    run.add_argument("--seeds", type=int, default=None)
    run.add_argument("--budget", type=int, default=None)
    run.add_argument("--eps", type=float, default=None)
    run.add_argument("--replications", type=int, default=None)
    run.add_argument("--jobs", type=int, default=1)
    run.add_argument("--check", action="store_true")

    sched = sub.add_parser("schedule", help="optimize a schedule for a problem file")
    sched.add_argument("problem", type=Path)
    sched.add_argument("--out", type=Path, default=None)

    sim = sub.add_parser("simulate", help="simulate a schedule file")
    sim.add_argument("schedule", type=Path)
    sim.add_argument("--out", type=Path, default=None)
    sim.add_argument("--timeline", type=Path, default=None)
    return parser


def _root_seed(config_seed: int) -> int:
    env = os.environ.get("MLMC_SCHED_SEED")
    return int(env) if env else config_seed


def _model_from_doc(doc: dict) -> RunTimeModel:
    factor_doc = doc.get("factor", {"kind": "constant"})
    kind = factor_doc.get("kind", "constant")
    if kind == "empirical":
        dist = RuntimeFactorDistribution("empirical", histogram=tuple(factor_doc["histogram"]))
    elif kind == "half-normal":
        dist = RuntimeFactorDistribution("half-normal", var_param=float(factor_doc.get("var", 0.0)))
    else:
        dist = RuntimeFactorDistribution("constant")
    if "t_ref" in doc:
        return RunTimeModel(
            tuple(tuple(row) for row in doc["t_ref"]),
            float(doc.get("serial_fraction", 0.0)),
            dist,
        )
    return RunTimeModel.from_surrogate(
        doc["t0_per_level"], float(doc["serial_fraction"]), int(doc["s_window"]), dist
    )


def _machine_from_doc(doc: dict) -> MachineConfig:
    return MachineConfig(
        p_max=int(doc["p_max"]),
        p0_min=int(doc.get("p0_min", 1)),
        s_window=int(doc.get("s_window", 4)),
    )


def _cmd_run(args) -> int:
    try:
        config = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    out_dir = args.out or Path("out") / args.scenario
    extra = {}
    if args.eps is not None:
        extra["eps"] = args.eps
    if args.replications is not None:
        extra["replications"] = args.replications
    result = run_scenario(
        args.scenario,
        config,
        out_dir,
        seeds=args.seeds,
        budget=args.budget,
        jobs=args.jobs,
        check=args.check,
        root_seed=_root_seed(config.root_seed),
        extra=extra,
    )
    print(f"scenario {result.name} -> {out_dir}")
    for key, value in result.summary.items():
        print(f"  {key} = {value}")
    if result.checks:
        for label, ok, detail in result.checks:
            status = "PASS" if ok else "FAIL"
            suffix = f"  [{detail}]" if detail else ""
            print(f"  check {status}: {label}{suffix}")
    if args.check and not result.all_ok:
        return CHECK_FAILED
    return 0


def _cmd_schedule(args) -> int:
    doc = json.loads(args.problem.read_text())
    machine = _machine_from_doc(doc["machine"])
    n_per_level = [int(v) for v in doc["n_per_level"]]
    if "t_matrix" in doc:
        t_matrix = tuple(tuple(float(v) for v in row) for row in doc["t_matrix"])
    else:
        model = RunTimeModel.from_surrogate(
            doc["t0_per_level"], float(doc.get("serial_fraction", 0.0)), machine.s_window
        )
        t_matrix = model.t_ref
    problem = HeteroProblem(machine, tuple(n_per_level), t_matrix)
    sa_doc = doc.get("sa", {})
    config = SaConfig(
        t0=float(sa_doc.get("t0", 1.0e3)),
        cooling=float(sa_doc.get("cooling", 0.8)),
        budget=int(sa_doc.get("budget", 4000)),
        mutation=sa_doc.get("mutation", "hybrid-b"),
    )
    t0_col = [row[0] for row in t_matrix]
    start, _ = initial_guess_s0(n_per_level, t0_col, machine)
    seeds = range(int(sa_doc.get("seeds", 10)))
    results = sa_study(start, config, problem, seeds=seeds)
    best = min(results, key=lambda r: (r.best_objective.makespan, -r.best_objective.idle_processors))
    text = best.best.to_json(indent=2, sort_keys=True)
    print(text)
    if args.out:
        args.out.write_text(text + "\n")
    return 0


def _cmd_simulate(args) -> int:
    doc = json.loads(args.schedule.read_text())
    machine = _machine_from_doc(doc["machine"])
    model = _model_from_doc(doc["model"])
    mode_doc = doc.get("mode", {})
    mode = ExecutionMode(
        kind=mode_doc.get("kind", "static-level-sync"),
        levels_concurrent=bool(mode_doc.get("levels_concurrent", False)),
        claim_latency=float(mode_doc.get("claim_latency", 0.0)),
    )
    sched_doc = doc["schedule"]
    if sched_doc.get("type", "matrix") == "matrix":
        schedule = ScheduleMatrix.from_dict(sched_doc)
        n_per_level = doc["n_per_level"]
    else:
        schedule = StaticSchedule.from_dict(sched_doc)
        n_per_level = None
    seed = _root_seed(int(doc.get("seed", 0)))
    report = simulate(schedule, model, mode, RandomStream(seed, ("simulate",)), machine, n_per_level)
    text = report.to_json(indent=2, sort_keys=True)
    print(text)
    if args.out:
        args.out.write_text(text + "\n")
    if args.timeline:
        args.timeline.mkdir(parents=True, exist_ok=True)
        export_timeline_csv(report, args.timeline / "timeline.csv")
        export_timeline_svg(report, args.timeline / "timeline.svg")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else USAGE_ERROR
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "schedule":
            return _cmd_schedule(args)
        if args.command == "simulate":
            return _cmd_simulate(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except (KeyError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    return USAGE_ERROR


if __name__ == "__main__":
    sys.exit(main())
