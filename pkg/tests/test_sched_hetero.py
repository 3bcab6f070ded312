import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mlmc_sched.perf import MachineConfig
from mlmc_sched.sched_hetero import (
    HeteroProblem,
    SaConfig,
    initial_guess_s0,
    level_kseq_solve,
    mutate,
    objective,
    repair,
    sa_optimize,
    sa_study,
    solve_schedule,
    _gaussian_step,
)
from mlmc_sched.streams import RandomStream

T_MATRIX = (
    (167.0, 83.84, 42.30, 21.63, 11.60),
    (171.0, 86.28, 44.53, 23.13, 12.41),
    (177.0, 90.40, 47.07, 24.21, 12.97),
    (179.0, 91.61, 48.27, 24.86, 13.63),
)
TABLE_N = (4123, 688, 108, 16)
MACHINE = MachineConfig(p_max=8192, p0_min=1, s_window=4)
PROBLEM = HeteroProblem(MACHINE, TABLE_N, T_MATRIX)
MATRIXSSR = [
    [0, 443, 73, 0, 0],
    [1, 98, 0, 0, 0],
    [0, 0, 3, 3, 0],
    [6, 0, 0, 0, 0],
]


def exhaustive_level_solve(n_row, t_row, target, k_max):
    """Brute-force oracle over all step-count vectors."""
    active = [i for i, n in enumerate(n_row) if n > 0]
    best = None
    for combo in itertools.product(range(k_max + 1), repeat=len(active)):
        got = sum(n_row[i] * k for i, k in zip(active, combo))
        if got < target:
            continue
        makespan = max(t_row[i] * k for i, k in zip(active, combo))
        if best is None or makespan < best - 1e-12:
            best = makespan
    return best


class TestInitialGuess:
    def test_reference_case(self):
        cand, makespan = initial_guess_s0(TABLE_N, [r[0] for r in T_MATRIX], MACHINE)
        assert [row[0] for row in cand] == [1305, 223, 36, 5]
        assert makespan == 716.0

    def test_single_level_uses_whole_machine(self):
        machine = MachineConfig(p_max=64, p0_min=1, s_window=0)
        cand, makespan = initial_guess_s0([10], [5.0], machine)
        assert cand[0][0] == 64
        assert makespan == 5.0

    def test_zero_floor_repaired_to_one(self):
        machine = MachineConfig(p_max=8192, p0_min=1, s_window=0)
        cand, _ = initial_guess_s0((100000, 1), (100.0, 0.001), machine)
        assert cand[1][0] >= 1


class TestLevelSolve:
    def test_single_active_theta(self):
        solve = level_kseq_solve((0, 5, 0), (1.0, 2.0, 3.0), 12)
        assert solve.k_seq == (0, 3, 0)
        assert solve.makespan == 6.0

    def test_reference_row(self):
        solve = level_kseq_solve((0, 0, 3, 3, 0), T_MATRIX[2], 108)
        assert solve.k_seq == (0, 0, 12, 24, 0)
        assert solve.makespan == pytest.approx(581.04)
        assert solve.computed == 108

    def test_toy_instance(self):
        solve = level_kseq_solve((2, 1), (10.0, 6.0), 7)
        assert solve.makespan == pytest.approx(20.0)
        assert sum(n * k for n, k in zip((2, 1), solve.k_seq)) >= 7

    def test_all_zero_rejected(self):
        with pytest.raises(ValueError):
            level_kseq_solve((0, 0), (1.0, 2.0), 5)

    @given(st.data())
    @settings(max_examples=150, deadline=None)
    def test_matches_exhaustive_oracle(self, data):
        n_active = data.draw(st.integers(1, 3))
        n_row = data.draw(
            st.lists(st.integers(1, 8), min_size=n_active, max_size=n_active)
        )
        t_row = data.draw(
            st.lists(st.floats(0.5, 30.0), min_size=n_active, max_size=n_active)
        )
        target = data.draw(st.integers(1, 50))
        solve = level_kseq_solve(n_row, t_row, target)
        oracle = exhaustive_level_solve(n_row, t_row, target, k_max=55)
        assert solve.makespan == pytest.approx(oracle, rel=1e-9)
        assert solve.computed >= target


def random_candidate(rng, problem):
    return [
        [int(rng.integers(0, 2 * problem.bound(l, t) + 2)) for t in range(problem.s + 1)]
        for l in range(problem.levels)
    ]


class TestRepair:
    def test_feasible_unchanged(self):
        assert repair(MATRIXSSR, PROBLEM) == MATRIXSSR

    def test_zero_row_gets_theta0_sample(self):
        cand = [row[:] for row in MATRIXSSR]
        cand[2] = [0, 0, 0, 0, 0]
        fixed = repair(cand, PROBLEM)
        assert fixed[2][0] == 1

    def test_all_genes_at_bound_terminates(self):
        cand = [
            [PROBLEM.bound(l, t) for t in range(PROBLEM.s + 1)]
            for l in range(PROBLEM.levels)
        ]
        fixed = repair(cand, PROBLEM)
        assert PROBLEM.usage(fixed) <= MACHINE.p_max

    def test_machine_too_small(self):
        small = MachineConfig(p_max=8, p0_min=1, s_window=0)
        problem = HeteroProblem(small, (1, 1), ((1.0,), (2.0,)))
        # level 1 alone needs 8 processors, level 0 needs 1: total 9 > 8
        with pytest.raises(ValueError):
            repair([[0], [0]], problem)

    @given(st.integers(0, 10_000))
    @settings(max_examples=200, deadline=None)
    def test_constraints_hold_for_random_candidates(self, seed):
        rng = RandomStream(seed, ("repair",)).generator()
        fixed = repair(random_candidate(rng, PROBLEM), PROBLEM)
        for l in range(PROBLEM.levels):
            assert sum(fixed[l]) > 0
            for t in range(PROBLEM.s + 1):
                assert 0 <= fixed[l][t] <= PROBLEM.bound(l, t)
        assert PROBLEM.usage(fixed) <= MACHINE.p_max


class TestMutate:
    def test_gaussian_step_scale(self):
        rng = RandomStream(0, ("g",)).generator()
        deltas = []
        for _ in range(4000):
            n = [[100] * 5 for _ in range(4)]
            _gaussian_step(n, PROBLEM, 1.0, rng)
            deltas.append(n[0][0] - 100)
        assert np.std(deltas) == pytest.approx(0.1 * 8192, rel=0.05)

    def test_results_always_feasible(self):
        rng = RandomStream(1, ("m",)).generator()
        cand = repair(MATRIXSSR, PROBLEM)
        for op in ("random-reset", "non-uniform", "gaussian", "hybrid-a", "hybrid-b"):
            for step in range(50):
                cand2 = mutate(cand, op, step, 100, PROBLEM, rng)
                assert PROBLEM.usage(cand2) <= MACHINE.p_max

    def test_hybrid_transfer_never_raises_footprint(self):
        # the paired transfer itself cannot increase processor usage
        from mlmc_sched.sched_hetero import _transfer_step

        rng = RandomStream(2, ("t",)).generator()
        for _ in range(10_000):
            cand = repair(random_candidate(rng, PROBLEM), PROBLEM)
            before = PROBLEM.usage(cand)
            work = [row[:] for row in cand]
            _transfer_step(work, PROBLEM, False, rng)
            assert PROBLEM.usage(work) <= before

    def test_unknown_operator(self):
        with pytest.raises(ValueError):
            mutate(MATRIXSSR, "flip", 0, 1, PROBLEM, RandomStream(0).generator())


class TestObjective:
    def test_reference_schedule(self):
        obj = objective(MATRIXSSR, PROBLEM)
        assert obj.makespan == pytest.approx(603.96)
        assert obj.makespan == pytest.approx(7 * 86.28)
        assert obj.idle_processors == 62

    def test_s0_optimum(self):
        machine = MachineConfig(p_max=8192, p0_min=1, s_window=0)
        problem = HeteroProblem(machine, TABLE_N, tuple((r[0],) for r in T_MATRIX))
        obj = objective([[1031], [172], [36], [6]], problem)
        assert obj.makespan == 684.0
        assert machine.p_max - obj.idle_processors == 7783

    def test_single_cell(self):
        machine = MachineConfig(p_max=16, p0_min=1, s_window=0)
        problem = HeteroProblem(machine, (10,), ((3.0,),))
        obj = objective([[4]], problem)
        assert obj.makespan == pytest.approx(3 * math.ceil(10 / 4))


class TestAnnealing:
    def test_zero_budget_returns_start(self):
        res = sa_optimize(MATRIXSSR, SaConfig(budget=0), PROBLEM, RandomStream(0, ("sa",)))
        assert res.best.n_par == tuple(tuple(r) for r in MATRIXSSR)

    def test_budget_one_start_or_single_mutant(self):
        start_obj = objective(repair(MATRIXSSR, PROBLEM), PROBLEM)
        res = sa_optimize(MATRIXSSR, SaConfig(budget=1), PROBLEM, RandomStream(0, ("sa",)))
        assert res.best_objective.makespan <= start_obj.makespan or (
            res.best_objective.makespan == start_obj.makespan
        )
        assert len(res.trace) == 1

    def test_trace_non_increasing(self):
        res = sa_optimize(
            MATRIXSSR, SaConfig(budget=300, mutation="hybrid-b"), PROBLEM, RandomStream(1, ("sa",))
        )
        assert all(a >= b for a, b in zip(res.trace, res.trace[1:]))

    def test_deterministic_given_seed(self):
        cfg = SaConfig(budget=200, mutation="hybrid-b")
        r1 = sa_optimize(MATRIXSSR, cfg, PROBLEM, RandomStream(9, ("sa",)))
        r2 = sa_optimize(MATRIXSSR, cfg, PROBLEM, RandomStream(9, ("sa",)))
        assert r1.best.n_par == r2.best.n_par
        assert r1.trace == r2.trace

    def test_cold_annealer_never_accepts_worse(self):
        import mlmc_sched.sched_hetero as sh

        cfg = SaConfig(t0=1e-12, cooling=0.5, budget=150, mutation="gaussian")
        rng_stream = RandomStream(3, ("cold",))
        # replay the chain and track the accepted objective
        rng = rng_stream.generator()
        cur = sh.repair(MATRIXSSR, PROBLEM)
        cur_obj = sh.objective(cur, PROBLEM)
        worsened = False
        temp = cfg.t0
        for step in range(cfg.budget):
            cand = sh.mutate(cur, cfg.mutation, step, cfg.budget, PROBLEM, rng, cfg.rate)
            obj = sh.objective(cand, PROBLEM)
            if obj.makespan < cur_obj.makespan or (
                obj.makespan == cur_obj.makespan
                and obj.idle_processors >= cur_obj.idle_processors
            ):
                cur, cur_obj = cand, obj
            elif rng.random() < math.exp(-(obj.makespan - cur_obj.makespan) / temp):
                worsened = True
            temp *= cfg.cooling
        assert not worsened

    def test_s0_reaches_684_on_two_seeds(self):
        machine = MachineConfig(p_max=8192, p0_min=1, s_window=0)
        problem = HeteroProblem(machine, TABLE_N, tuple((r[0],) for r in T_MATRIX))
        start, _ = initial_guess_s0(TABLE_N, [r[0] for r in T_MATRIX], machine)
        results = sa_study(start, SaConfig(budget=2000, mutation="gaussian"), problem, seeds=(0, 1))
        assert all(r.best_objective.makespan == 684.0 for r in results)

    def test_study_jobs_do_not_change_results(self):
        machine = MachineConfig(p_max=8192, p0_min=1, s_window=0)
        problem = HeteroProblem(machine, TABLE_N, tuple((r[0],) for r in T_MATRIX))
        start, _ = initial_guess_s0(TABLE_N, [r[0] for r in T_MATRIX], machine)
        cfg = SaConfig(budget=300, mutation="gaussian")
        serial = sa_study(start, cfg, problem, seeds=(0, 1, 2))
        parallel = sa_study(start, cfg, problem, seeds=(0, 1, 2), jobs=2)
        assert [r.best_objective.makespan for r in serial] == [
            r.best_objective.makespan for r in parallel
        ]


def test_schedule_matrix_json_round_trip():
    from mlmc_sched.sched_hetero import ScheduleMatrix
    import json

    sched = solve_schedule(MATRIXSSR, PROBLEM)
    doc = json.loads(sched.to_json())
    again = ScheduleMatrix.from_dict(doc)
    assert again.n_par == sched.n_par
    assert again.k_seq == sched.k_seq
