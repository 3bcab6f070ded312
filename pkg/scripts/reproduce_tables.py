#!/usr/bin/env python3
"""Reproduce the bundled timing studies end to end.

Runs the level-efficiency table, both heterogeneous optimization cases and
the run-time variation demo, with their acceptance thresholds enabled, and
leaves all CSV/JSON/SVG outputs under out/.
"""

import sys
from pathlib import Path

from mlmc_sched.cli import main

OUT = Path("out")

STEPS = [
    ["run", "tab-level-eff", "--check", "--out", str(OUT / "tab-level-eff")],
    ["run", "sched-s0", "--check", "--out", str(OUT / "sched-s0")],
    ["run", "sched-s4-mutants", "--check", "--out", str(OUT / "sched-s4-mutants")],
    ["run", "runtime-robust-demo", "--check", "--out", str(OUT / "runtime-robust-demo")],
]

if __name__ == "__main__":
    status = 0
    for argv in STEPS:
        print(f"$ mlmc-sched {' '.join(argv)}")
        code = main(argv)
        status = status or code
    sys.exit(status)
