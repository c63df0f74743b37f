#!/usr/bin/env python3
"""Stationary-user sweeps: absorption coefficient, blocker density, BS split.

Each sweep runs the joint solver plus both benchmarks for the dual-band
network and for the THz-only deployment with matched total BS count.
Outputs land under runs/<axis>-<deployment>/.
"""

import argparse
import dataclasses
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from mbnsim.runner import run_experiment
from mbnsim.scenario import scenario_from_config

CONFIG = Path(__file__).resolve().parent.parent / "configs" / "desk.cfg"


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--trials", type=int, default=10)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--axes", nargs="*", default=["absorption", "blockage", "bs-split"])
    args = parser.parse_args()

    base = scenario_from_config(CONFIG.read_text(), overrides={"num_windows": "1", "speed_mps": "0"})
    thz_only = dataclasses.replace(
        base,
        num_tbs=base.num_tbs + base.num_ubs,
        num_ubs=0,
        cluster_t=base.cluster_t + base.cluster_u,
    )
    for axis in args.axes:
        deployments = [("mbn", base)] if axis == "bs-split" else [("mbn", base), ("thz-only", thz_only)]
        for label, scn in deployments:
            out = f"runs/{axis}-{label}"
            run_experiment(
                scn,
                ["algo1", "b1", "zf"],
                sweep=axis,
                trials=args.trials,
                seed=args.seed,
                out_dir=out,
            )
            print(f"wrote {out}")


if __name__ == "__main__":
    main()
