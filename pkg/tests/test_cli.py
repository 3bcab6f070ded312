import json

import pytest

from mlmc_sched.cli import main

T_MATRIX = [
    [167.0, 83.84, 42.30, 21.63, 11.60],
    [171.0, 86.28, 44.53, 23.13, 12.41],
    [177.0, 90.40, 47.07, 24.21, 12.97],
    [179.0, 91.61, 48.27, 24.86, 13.63],
]


def test_usage_error_exit_code():
    assert main(["run", "no-such-scenario"]) == 64
    assert main(["frobnicate"]) == 64
    assert main([]) == 64


def test_missing_file_exit_code(tmp_path):
    assert main(["schedule", str(tmp_path / "nope.json")]) == 64


def test_run_scenario_writes_outputs(tmp_path, capsys):
    out = tmp_path / "out"
    code = main(["run", "tab-level-eff", "--out", str(out), "--check"])
    captured = capsys.readouterr().out
    assert code == 0
    assert "check PASS" in captured
    assert (out / "summary.json").exists()
    assert (out / "level_efficiency.csv").exists()
    assert (out / "timeline.svg").exists()


def test_run_outputs_are_reproducible(tmp_path):
    out1 = tmp_path / "a"
    out2 = tmp_path / "b"
    assert main(["run", "tab-level-eff", "--out", str(out1)]) == 0
    assert main(["run", "tab-level-eff", "--out", str(out2)]) == 0
    for name in ("summary.json", "level_efficiency.csv", "timeline.csv"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


def test_seed_env_changes_stochastic_results(tmp_path, monkeypatch, capsys):
    out1 = tmp_path / "a"
    monkeypatch.setenv("MLMC_SCHED_SEED", "1")
    main(["run", "adaptive-synthetic", "--out", str(out1), "--eps", "0.05"])
    doc1 = json.loads((out1 / "summary.json").read_text())
    monkeypatch.setenv("MLMC_SCHED_SEED", "2")
    out2 = tmp_path / "b"
    main(["run", "adaptive-synthetic", "--out", str(out2), "--eps", "0.05"])
    doc2 = json.loads((out2 / "summary.json").read_text())
    assert doc1["estimate"] != doc2["estimate"]


def test_schedule_command(tmp_path, capsys):
    problem = {
        "machine": {"p_max": 8192, "p0_min": 1, "s_window": 0},
        "n_per_level": [4123, 688, 108, 16],
        "t_matrix": [[row[0]] for row in T_MATRIX],
        "sa": {"budget": 2000, "mutation": "gaussian", "seeds": 2},
    }
    path = tmp_path / "problem.json"
    path.write_text(json.dumps(problem))
    out = tmp_path / "schedule.json"
    code = main(["schedule", str(path), "--out", str(out)])
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["makespan"] == 684.0
    assert sum(doc["n_par"][level][0] * 8**level for level in range(4)) >= 7783


def test_simulate_command_static(tmp_path, capsys):
    doc = {
        "machine": {"p_max": 8192, "p0_min": 1, "s_window": 4},
        "model": {"t_ref": T_MATRIX, "factor": {"kind": "constant"}},
        "mode": {"kind": "static-level-sync"},
        "schedule": {
            "type": "static",
            "sync_mode": "level-sync",
            "levels": [
                {"level": 0, "theta": 4, "procs_per_block": 16, "j_blocks": 512,
                 "k_seq": 9, "n_target": 4123, "oversampling": 485},
                {"level": 1, "theta": 2, "procs_per_block": 32, "j_blocks": 256,
                 "k_seq": 3, "n_target": 688, "oversampling": 80},
                {"level": 2, "theta": 3, "procs_per_block": 512, "j_blocks": 16,
                 "k_seq": 7, "n_target": 108, "oversampling": 4},
                {"level": 3, "theta": 0, "procs_per_block": 512, "j_blocks": 16,
                 "k_seq": 1, "n_target": 16, "oversampling": 0},
            ],
        },
    }
    path = tmp_path / "schedule.json"
    path.write_text(json.dumps(doc))
    code = main(["simulate", str(path), "--timeline", str(tmp_path / "tl")])
    assert code == 0
    import re

    out = capsys.readouterr().out
    report = json.loads(out[out.index("{"):])
    assert report["makespan"] == pytest.approx(586.46)
    assert (tmp_path / "tl" / "timeline.svg").exists()


def test_simulate_command_matrix(tmp_path, capsys):
    doc = {
        "machine": {"p_max": 8192, "p0_min": 1, "s_window": 4},
        "model": {"t_ref": T_MATRIX, "factor": {"kind": "constant"}},
        "mode": {"kind": "static-level-sync", "levels_concurrent": True},
        "n_per_level": [4123, 688, 108, 16],
        "schedule": {
            "type": "matrix",
            "n_par": [[0, 443, 73, 0, 0], [1, 98, 0, 0, 0], [0, 0, 3, 3, 0], [6, 0, 0, 0, 0]],
            "k_seq": [[0, 7, 14, 0, 0], [2, 7, 0, 0, 0], [0, 0, 12, 24, 0], [3, 0, 0, 0, 0]],
        },
    }
    path = tmp_path / "schedule.json"
    path.write_text(json.dumps(doc))
    code = main(["simulate", str(path)])
    assert code == 0
    out = capsys.readouterr().out
    report = json.loads(out[out.index("{"):])
    assert report["makespan"] == pytest.approx(603.96)


def test_malformed_config_exit_code(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("[machine]\np_max = many\n")
    assert main(["run", "tab-level-eff", "--config", str(cfg)]) == 64


def test_check_violation_exit_code(tmp_path):
    # 3 replications cannot produce a probability inside [0.70, 0.80]
    code = main(
        ["run", "runtime-robust-demo", "--out", str(tmp_path), "--replications", "3", "--check"]
    )
    assert code == 2


def test_schedule_command_with_surrogate_times(tmp_path):
    problem = {
        "machine": {"p_max": 512, "p0_min": 1, "s_window": 2},
        "n_per_level": [100, 10],
        "t0_per_level": [50.0, 52.0],
        "serial_fraction": 0.02,
        "sa": {"budget": 400, "mutation": "hybrid-b", "seeds": 2},
    }
    path = tmp_path / "problem.json"
    path.write_text(json.dumps(problem))
    assert main(["schedule", str(path), "--out", str(tmp_path / "s.json")]) == 0
    doc = json.loads((tmp_path / "s.json").read_text())
    assert doc["makespan"] > 0


def test_simulate_command_half_normal(tmp_path, capsys):
    doc = {
        "machine": {"p_max": 64, "p0_min": 1, "s_window": 0},
        "model": {"t_ref": [[10.0]], "factor": {"kind": "half-normal", "var": 0.5}},
        "mode": {"kind": "dynamic"},
        "schedule": {
            "type": "static",
            "sync_mode": "level-sync",
            "levels": [
                {"level": 0, "theta": 0, "procs_per_block": 1, "j_blocks": 64,
                 "k_seq": 2, "n_target": 100, "oversampling": 28},
            ],
        },
        "seed": 5,
    }
    path = tmp_path / "schedule.json"
    path.write_text(json.dumps(doc))
    assert main(["simulate", str(path)]) == 0
    out = capsys.readouterr().out
    report = json.loads(out[out.index("{"):])
    assert report["makespan"] > 20.0
    assert report["computed_samples"]["0"] == 100
