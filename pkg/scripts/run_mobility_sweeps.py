#!/usr/bin/env python3
"""Mobility studies: handover-cost sweep, scalarization-weight sweep, QoS and
CSI-uncertainty sweeps over moving users with per-point association chaining."""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from mbnsim.runner import run_experiment
from mbnsim.scenario import scenario_from_config

CONFIG = Path(__file__).resolve().parent.parent / "configs" / "desk.cfg"


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--trials", type=int, default=10)
    parser.add_argument("--seed", type=int, default=17)
    parser.add_argument(
        "--axes", nargs="*", default=["ho-cost", "moop-weight", "qos", "csi"]
    )
    args = parser.parse_args()

    scn = scenario_from_config(CONFIG.read_text())
    algorithms = ["algo1", "b1", "ho-cost", "ho-moop"]
    for axis in args.axes:
        out = f"runs/{axis}"
        run_experiment(scn, algorithms, sweep=axis, trials=args.trials, seed=args.seed, out_dir=out)
        print(f"wrote {out}")


if __name__ == "__main__":
    main()
