import csv

import numpy as np
import pytest

from mlmc_sched.machine_sim import (
    ExecutionMode,
    efficiency_report,
    export_timeline_csv,
    export_timeline_svg,
    simulate,
    simulate_matrix_batch,
    simulate_static_batch,
)
from mlmc_sched.perf import (
    MachineConfig,
    RunTimeModel,
    RuntimeFactorDistribution,
    theoretical_optimum,
)
from mlmc_sched.sched_hetero import HeteroProblem, solve_schedule
from mlmc_sched.sched_homog import build_static_schedule, choose_thetas
from mlmc_sched.streams import RandomStream

T_MATRIX = (
    (167.0, 83.84, 42.30, 21.63, 11.60),
    (171.0, 86.28, 44.53, 23.13, 12.41),
    (177.0, 90.40, 47.07, 24.21, 12.97),
    (179.0, 91.61, 48.27, 24.86, 13.63),
)
TABLE_N = (4123, 688, 108, 16)
MACHINE = MachineConfig(p_max=8192, p0_min=1, s_window=4)
MODEL = RunTimeModel(T_MATRIX)


def reference_schedule(model=MODEL):
    choice = choose_thetas(TABLE_N, MACHINE, model)
    return build_static_schedule(choice, TABLE_N, MACHINE)


class TestZeroVariation:
    def test_level_sync_makespan_is_sum_of_level_times(self):
        schedule = reference_schedule()
        report = simulate(schedule, MODEL, ExecutionMode("static-level-sync"), RandomStream(0), MACHINE)
        assert report.makespan == pytest.approx(schedule.predicted_makespan(MODEL))

    def test_all_modes_agree_for_constant_factors(self):
        schedule = reference_schedule()
        makespans = []
        for kind in ("static-sample-sync", "static-level-sync", "dynamic"):
            report = simulate(schedule, MODEL, ExecutionMode(kind), RandomStream(0), MACHINE)
            makespans.append(report.makespan)
        assert makespans[0] == pytest.approx(makespans[1])
        assert makespans[1] == pytest.approx(makespans[2])

    def test_heterogeneous_reference_makespan(self):
        problem = HeteroProblem(MACHINE, TABLE_N, T_MATRIX)
        matrix = solve_schedule(
            [[0, 443, 73, 0, 0], [1, 98, 0, 0, 0], [0, 0, 3, 3, 0], [6, 0, 0, 0, 0]], problem
        )
        report = simulate(
            matrix, MODEL, ExecutionMode("static-level-sync", levels_concurrent=True),
            RandomStream(0), MACHINE, TABLE_N,
        )
        assert report.makespan == pytest.approx(603.96)

    def test_static_counts(self):
        schedule = reference_schedule()
        report = simulate(schedule, MODEL, ExecutionMode("static-level-sync"), RandomStream(0), MACHINE)
        for plan in schedule.plans:
            assert report.computed_samples[plan.level] == plan.j_blocks * plan.k_seq
            assert report.oversampled[plan.level] == plan.oversampling

    def test_dynamic_counts_exact(self):
        schedule = reference_schedule()
        report = simulate(schedule, MODEL, ExecutionMode("dynamic"), RandomStream(0), MACHINE)
        for plan in schedule.plans:
            assert report.computed_samples[plan.level] == plan.n_target
            assert report.oversampled[plan.level] == 0


HEAVY_DIST = RuntimeFactorDistribution(
    "empirical", histogram=tuple([45.0] * 2045 + [50.0] * 3)
)


def heavy_tail_model():
    hist = HEAVY_DIST.histogram
    t_ref = float(np.mean(hist))
    return RunTimeModel.from_surrogate([t_ref], 0.01, 4, HEAVY_DIST)


def heavy_tail_schedule(model):
    machine = MachineConfig(p_max=524_288, p0_min=512, s_window=4)
    choice = choose_thetas((2048,), machine, model)
    assert choice.thetas == (0,)
    return build_static_schedule(choice, (2048,), machine), machine


class TestStochasticReplay:
    def test_straggler_probabilities(self):
        model = heavy_tail_model()
        schedule, machine = heavy_tail_schedule(model)
        reps = 2000
        root = RandomStream(31)
        sasy = simulate_static_batch(schedule, model, "static-sample-sync", root, reps)
        lesy = simulate_static_batch(schedule, model, "static-level-sync", root, reps)
        p_sasy = np.mean(sasy >= 100.0 - 1e-6)
        p_lesy = np.mean(lesy >= 100.0 - 1e-6)
        assert 0.70 <= p_sasy <= 0.80
        assert p_lesy <= 0.02
        assert np.all(lesy[lesy < 100.0 - 1e-6] <= 96.0 + 1e-6)

    def test_batch_matches_event_simulator_per_rep(self):
        model = heavy_tail_model()
        machine = MachineConfig(p_max=8192, p0_min=512, s_window=4)
        choice = choose_thetas((40,), machine, model)
        schedule = build_static_schedule(choice, (40,), machine)
        root = RandomStream(17)
        for kind in ("static-sample-sync", "static-level-sync", "dynamic"):
            batch = simulate_static_batch(schedule, model, kind, root, 5)
            for rep in range(5):
                report = simulate(
                    schedule, model, ExecutionMode(kind), root.split("rep", rep), machine
                )
                assert report.makespan == pytest.approx(batch[rep], rel=1e-12)

    def test_half_normal_batch_matches_event(self):
        dist = RuntimeFactorDistribution("half-normal", var_param=0.5)
        model = RunTimeModel(T_MATRIX, 0.0, dist)
        schedule = reference_schedule(model)
        root = RandomStream(23)
        batch = simulate_static_batch(schedule, model, "static-level-sync", root, 3)
        for rep in range(3):
            report = simulate(
                schedule, model, ExecutionMode("static-level-sync"), root.split("rep", rep), MACHINE
            )
            assert report.makespan == pytest.approx(batch[rep], rel=1e-12)

    def test_matrix_batch_matches_event(self):
        dist = RuntimeFactorDistribution("half-normal", var_param=0.3)
        model = RunTimeModel(T_MATRIX, 0.0, dist)
        problem = HeteroProblem(MACHINE, TABLE_N, T_MATRIX)
        matrix = solve_schedule(
            [[0, 443, 73, 0, 0], [1, 98, 0, 0, 0], [0, 0, 3, 3, 0], [6, 0, 0, 0, 0]], problem
        )
        root = RandomStream(29)
        batch = simulate_matrix_batch(matrix, model, MACHINE, TABLE_N, root, 3)
        for rep in range(3):
            report = simulate(
                matrix, model, ExecutionMode("static-level-sync", levels_concurrent=True),
                root.split("rep", rep), MACHINE, TABLE_N,
            )
            assert report.makespan == pytest.approx(batch[rep], rel=1e-12)

    def test_dynamic_reduces_levelsync_makespan(self):
        dist = RuntimeFactorDistribution("half-normal", var_param=1.0)
        model = RunTimeModel(T_MATRIX, 0.0, dist)
        schedule = reference_schedule(model)
        root = RandomStream(41)
        lesy = simulate_static_batch(schedule, model, "static-level-sync", root, 50)
        dyn = simulate_static_batch(schedule, model, "dynamic", root, 50)
        assert dyn.mean() <= lesy.mean() + 1e-9


class TestInvariants:
    def test_no_overlap_within_block(self):
        dist = RuntimeFactorDistribution("half-normal", var_param=0.5)
        model = RunTimeModel(T_MATRIX, 0.0, dist)
        machine = MachineConfig(p_max=64, p0_min=1, s_window=2)
        choice = choose_thetas((50, 7), machine, RunTimeModel(tuple(r[:3] for r in T_MATRIX[:2])))
        schedule = build_static_schedule(choice, (50, 7), machine)
        report = simulate(
            schedule, RunTimeModel(tuple(r[:3] for r in T_MATRIX[:2]), 0.0, dist),
            ExecutionMode("dynamic"), RandomStream(3), machine,
        )
        by_block = {}
        for iv in report.timeline:
            by_block.setdefault(iv.block, []).append(iv)
        for intervals in by_block.values():
            intervals.sort(key=lambda iv: iv.start)
            for a, b in zip(intervals, intervals[1:]):
                assert a.end <= b.start + 1e-12

    def test_work_conservation_dynamic(self):
        # a block never idles while its level has unclaimed samples
        dist = RuntimeFactorDistribution("half-normal", var_param=0.5)
        model = RunTimeModel(((10.0, 6.0),), 0.0, dist)
        machine = MachineConfig(p_max=4, p0_min=1, s_window=1)
        choice = choose_thetas((11,), machine, RunTimeModel(((10.0, 6.0),)))
        schedule = build_static_schedule(choice, (11,), machine)
        report = simulate(schedule, model, ExecutionMode("dynamic"), RandomStream(5), machine)
        starts = sorted(iv.start for iv in report.timeline)
        ends = sorted(iv.end for iv in report.timeline)
        # every claim happens at time 0 or exactly when some block finishes
        for s in starts:
            assert s == 0.0 or any(abs(s - e) < 1e-12 for e in ends)

    def test_processor_capacity_respected(self):
        problem = HeteroProblem(MACHINE, TABLE_N, T_MATRIX)
        matrix = solve_schedule(
            [[0, 443, 73, 0, 0], [1, 98, 0, 0, 0], [0, 0, 3, 3, 0], [6, 0, 0, 0, 0]], problem
        )
        report = simulate(
            matrix, MODEL, ExecutionMode("static-level-sync", levels_concurrent=True),
            RandomStream(0), MACHINE, TABLE_N,
        )
        events = sorted(
            {iv.start for iv in report.timeline} | {iv.end for iv in report.timeline}
        )
        for t in events[:-1]:
            active = sum(
                iv.processors for iv in report.timeline if iv.start <= t < iv.end
            )
            assert active <= MACHINE.p_max


class TestEfficiencyReport:
    def test_perfect(self):
        schedule = reference_schedule()
        report = simulate(schedule, MODEL, ExecutionMode("static-level-sync"), RandomStream(0), MACHINE)
        metrics = efficiency_report(report, report.makespan)
        assert metrics["efficiency"] == 1.0

    def test_reference_efficiency(self):
        schedule = reference_schedule()
        report = simulate(schedule, MODEL, ExecutionMode("static-level-sync"), RandomStream(0), MACHINE)
        t_opt = theoretical_optimum(MACHINE, TABLE_N, (166.0, 168.0, 174.0, 177.0))
        metrics = efficiency_report(report, t_opt)
        assert metrics["efficiency"] == pytest.approx(0.89, abs=0.01)

    def test_per_level_eta(self):
        schedule = reference_schedule()
        report = simulate(schedule, MODEL, ExecutionMode("static-level-sync"), RandomStream(0), MACHINE)
        metrics = efficiency_report(
            report, 520.0, MACHINE, TABLE_N, [row[0] for row in T_MATRIX]
        )
        assert set(metrics["realized_eta"]) == {0, 1, 2, 3}
        for eta in metrics["realized_eta"].values():
            assert 0.0 < eta <= 1.0 + 1e-9


class TestExports:
    def test_csv_round_trip_partition(self, tmp_path):
        schedule = reference_schedule()
        report = simulate(schedule, MODEL, ExecutionMode("static-level-sync"), RandomStream(0), MACHINE)
        path = export_timeline_csv(report, tmp_path / "t.csv")
        with path.open() as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == len(report.timeline)
        assert len(rows) == sum(report.computed_samples.values())
        # busy spans within a block partition exactly (no overlaps, no holes
        # inside one level's run)
        by_block = {}
        for row in rows:
            by_block.setdefault(row["block"], []).append(
                (float(row["start"]), float(row["end"]))
            )
        for spans in by_block.values():
            spans.sort()
            for (s1, e1), (s2, e2) in zip(spans, spans[1:]):
                assert e1 <= s2 + 1e-12

    def test_svg_rectangle_count(self, tmp_path):
        machine = MachineConfig(p_max=8, p0_min=1, s_window=1)
        model = RunTimeModel(((5.0, 3.0), (7.0, 4.0)))
        choice = choose_thetas((5, 3), machine, model)
        schedule = build_static_schedule(choice, (5, 3), machine)
        report = simulate(schedule, model, ExecutionMode("static-level-sync"), RandomStream(1), machine)
        path = export_timeline_svg(report, tmp_path / "t.svg")
        text = path.read_text()
        sample_rects = text.count('stroke-width="0.2"')
        assert sample_rects == sum(report.computed_samples.values())

    def test_empty_schedule_svg(self, tmp_path):
        report = simulate(
            build_static_schedule(
                choose_thetas((), MACHINE, MODEL), (), MACHINE
            ),
            MODEL, ExecutionMode("static-level-sync"), RandomStream(0), MACHINE,
        )
        path = export_timeline_svg(report, tmp_path / "empty.svg")
        text = path.read_text()
        assert "<svg" in text and "line" in text
