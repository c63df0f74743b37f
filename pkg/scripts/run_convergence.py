#!/usr/bin/env python3
"""Solver convergence traces on a handful of seeded desk instances.

Writes runs/convergence/{results,trace,...}.csv; the trace file feeds the
figures package's convergence plot.
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from mbnsim.runner import run_experiment
from mbnsim.scenario import scenario_from_config

CONFIG = Path(__file__).resolve().parent.parent / "configs" / "desk.cfg"


def main() -> None:
    scn = scenario_from_config(CONFIG.read_text(), overrides={"num_windows": "1", "speed_mps": "0"})
    paths = run_experiment(
        scn,
        ["algo1"],
        trials=3,
        seed=2024,
        out_dir="runs/convergence",
    )
    for name, path in paths.items():
        if name != "all_failed":
            print(f"{name}: {path}")


if __name__ == "__main__":
    main()
