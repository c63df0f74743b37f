"""Experiment orchestration: Monte Carlo trials, parameter sweeps, CSV/JSON
persistence and the command-line entry point.

Every run writes results.csv (one row per algorithm x sweep value x trial x
trajectory point, fixed column order), trace.csv (per-iteration solver
records), summary.csv (mean and standard error per algorithm x sweep value)
and manifest.json (config echo, seed, version, wall-clock).  Reruns with the
same config and seed produce byte-identical CSVs; measured per-row timing is
opt-in (--live-timing) because it breaks reproducibility, and always goes to
the manifest.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, baselines, fp, ho, oracle
from .metrics import AssociationState, ho_aware_rates, naive_user_rates
from .results import STATUS_INFEASIBLE, SolveResult
from .scenario import ConfigError, Scenario, config_dump, scenario_from_config, step_trajectory
from .scenario import generate_topology, synthesize_channels, thz_distances
from .channel import sample_blockage_matrix

ALGORITHMS = ("algo1", "b1", "zf", "ho-cost", "ho-moop", "oracle")
RESULT_COLUMNS = (
    "algorithm",
    "sweep_param",
    "sweep_value",
    "trial",
    "point",
    "sum_rate_gbps",
    "ho_sum_rate_gbps",
    "total_hos",
    "status",
    "iters",
    "wall_ms",
)
TRACE_COLUMNS = ("algorithm", "sweep_param", "sweep_value", "trial", "point", "iteration", "objective", "penalty")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ALL_FAILED = 3


def _apply_antennas(scn: Scenario, scale: float) -> Scenario:
    def snap(m0: int) -> int:
        k = scn.num_users
        return max(k, int(round(m0 * scale / k)) * k)

    return dataclasses.replace(scn, m_thz=snap(scn.m_thz), m_umb=snap(scn.m_umb))


def _apply_cluster(scn: Scenario, v: float) -> Scenario:
    c = int(v)
    return dataclasses.replace(
        scn,
        cluster_t=min(c, scn.num_tbs) if scn.num_tbs else scn.cluster_t,
        cluster_u=min(c, scn.num_ubs) if scn.num_ubs else scn.cluster_u,
    )


def _apply_bs_split(scn: Scenario, v: float) -> Scenario:
    total = scn.num_tbs + scn.num_ubs
    tbs = int(v)
    if not 0 <= tbs <= total:
        raise ConfigError([f"bs-split value {tbs} outside [0, {total}]"])
    return dataclasses.replace(
        scn,
        num_tbs=tbs,
        num_ubs=total - tbs,
        cluster_t=min(scn.cluster_t, tbs) if tbs else scn.cluster_t,
        cluster_u=min(scn.cluster_u, total - tbs) if total - tbs else scn.cluster_u,
    )


SWEEPS: dict[str, dict] = {
    "absorption": {
        "apply": lambda scn, v: dataclasses.replace(scn, absorption_coeff=float(v)),
        "values": [0.0, 0.025, 0.05, 0.1, 0.2],
        "chained": False,
    },
    "blockage": {
        "apply": lambda scn, v: dataclasses.replace(scn, blocker_density=float(v)),
        "values": [0.0, 0.005, 0.01, 0.02, 0.04],
        "chained": False,
    },
    "bs-split": {"apply": _apply_bs_split, "values": None, "chained": False},
    "antennas": {"apply": _apply_antennas, "values": [0.25, 0.5, 1.0, 2.0], "chained": False},
    "cluster": {"apply": _apply_cluster, "values": [1.0, 2.0, 3.0], "chained": False},
    "ho-cost": {
        "apply": lambda scn, v: dataclasses.replace(scn, eta_thz=float(v), eta_umb=float(v)),
        "values": [0.1, 0.3, 0.5, 0.7],
        "chained": True,
    },
    "qos": {
        "apply": lambda scn, v: dataclasses.replace(scn, qos_gbps=float(v)),
        "values": [0.1, 0.25, 0.5, 0.75, 1.0],
        "chained": False,
    },
    "csi": {
        "apply": lambda scn, v: dataclasses.replace(scn, csi_uncertainty=float(v)),
        "values": [0.0, 0.05, 0.1, 0.2, 0.4],
        "chained": False,
    },
    "moop-weight": {
        "apply": lambda scn, v: dataclasses.replace(scn, moop_weight=float(v)),
        "values": [0.0, 0.5, 1.0, 5.0, 50.0],
        "chained": True,
    },
}


def sweep_values(scn: Scenario, axis: str) -> list[float]:
    if axis == "bs-split":
        total = scn.num_tbs + scn.num_ubs
        return [float(v) for v in range(0, total + 1, 2)]
    return list(SWEEPS[axis]["values"])


def dispatch(
    algorithm: str,
    scn: Scenario,
    channels,
    ideal,
    prev: AssociationState | None,
    opts: fp.AlgoOptions | None,
    init: SolveResult | None = None,
) -> SolveResult:
    if algorithm == "algo1":
        return fp.run_algorithm1(
            scn, channels, eval_channels=ideal, prev_assoc=prev, opts=opts, init=init
        )
    if algorithm == "b1":
        return baselines.run_b1(scn, channels, eval_channels=ideal, prev_assoc=prev, opts=opts)
    if algorithm == "zf":
        return baselines.run_zf(scn, channels, eval_channels=ideal, prev_assoc=prev)
    if algorithm == "ho-cost":
        return ho.run_ho_cost(scn, channels, prev, eval_channels=ideal, opts=opts, init=init)
    if algorithm == "ho-moop":
        return ho.run_moop(scn, channels, prev, eval_channels=ideal, opts=opts, init=init)
    if algorithm == "oracle":
        return oracle.brute_force_solve(scn, channels, prev_assoc=prev, eval_channels=ideal, opts=opts)
    raise ValueError(f"unknown algorithm {algorithm!r}")


def _audit_row(scn: Scenario, ideal, result: SolveResult) -> None:
    if result.status == STATUS_INFEASIBLE:
        return
    recomputed = naive_user_rates(
        ideal,
        result.assoc,
        result.beams,
        scn.thz if ideal.n_tbs else None,
        scn.umb if ideal.n_ubs else None,
    )
    reference = float(np.sum(recomputed))
    if abs(reference - result.sum_rate_bps) > 1e-9 * max(1.0, abs(reference)):
        raise RuntimeError(
            f"audit mismatch: stored sum rate {result.sum_rate_bps} vs recomputed {reference}"
        )


def _point_channels(scn: Scenario, seed: int, value_idx: int, trial: int):
    """Deterministic per-point channel stream for one (sweep value, trial)."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, value_idx, trial]))
    topo = generate_topology(scn, rng)
    user_x = topo.user_x.copy()
    blockage = None
    if scn.num_tbs and not scn.blockage_per_point:
        blockage = sample_blockage_matrix(thz_distances(topo, user_x), scn.blocker_density, rng)
    out = []
    for point in range(scn.num_windows):
        if point:
            user_x = step_trajectory(user_x, scn.speed_mps, scn.window_s, scn.corridor_length)
        est, ideal = synthesize_channels(scn, topo, user_x, rng, blockage=blockage)
        out.append((est, ideal))
    return out


def _run_cell(
    scn: Scenario,
    algorithms: list[str],
    sweep_param: str,
    value,
    value_idx: int,
    trial: int,
    seed: int,
    opts: fp.AlgoOptions | None,
    audit: bool,
    live_timing: bool,
) -> tuple[list[dict], list[dict]]:
    """All algorithms across trajectory points for one (sweep value, trial)."""
    per_point = _point_channels(scn, seed, value_idx, trial)
    rows: list[dict] = []
    traces: list[dict] = []
    prev: dict[str, AssociationState | None] = {alg: None for alg in algorithms}
    for point, (est, ideal) in enumerate(per_point):
        for alg in algorithms:
            rows_extra = _execute(
                scn, alg, est, ideal, prev[alg], opts, None, sweep_param, value, trial, point, audit, live_timing
            )
            result, row, trace_rows = rows_extra
            rows.append(row)
            traces.extend(trace_rows)
            if result is not None and result.status != STATUS_INFEASIBLE:
                prev[alg] = result.assoc
    return rows, traces


def _execute(
    scn, alg, est, ideal, prev, opts, init, sweep_param, value, trial, point, audit, live_timing
):
    from .subproblem import Infeasible, MaxIterations

    try:
        result = dispatch(alg, scn, est, ideal, prev, opts, init=init)
        if audit:
            _audit_row(scn, ideal, result)
        row = _result_row(result, alg, sweep_param, value, trial, point, live_timing)
        return result, row, _trace_rows(result, alg, sweep_param, value, trial, point)
    except (oracle.BudgetExceeded, Infeasible, MaxIterations, ValueError) as exc:
        row = {
            "algorithm": alg,
            "sweep_param": sweep_param,
            "sweep_value": value,
            "trial": trial,
            "point": point,
            "sum_rate_gbps": 0.0,
            "ho_sum_rate_gbps": 0.0,
            "total_hos": 0,
            "status": f"Error:{type(exc).__name__}",
            "iters": 0,
            "wall_ms": 0,
        }
        return None, row, []


def _run_trial_chained(
    scn: Scenario,
    algorithms: list[str],
    axis: str,
    values: list,
    trial: int,
    seed: int,
    opts: fp.AlgoOptions | None,
    audit: bool,
    live_timing: bool,
) -> tuple[list[dict], list[dict]]:
    """Cost-like axes (handover cost, scalarization weight): physics is fixed
    per trial, so solutions whose optimization ignores the axis are computed
    once per point and only their effective-rate reporting varies; the
    cost-aware solvers sweep values with the previous value's solution kept as
    a competing candidate (see the sweep helpers)."""
    per_point = _point_channels(scn, seed, 0, trial)
    rows: list[dict] = []
    traces: list[dict] = []
    prev: dict[tuple, AssociationState | None] = {
        (alg, vi): None for alg in algorithms for vi in range(len(values))
    }
    for point, (est, ideal) in enumerate(per_point):
        for alg in algorithms:
            value_aware = (axis == "ho-cost" and alg == "ho-cost") or (
                axis == "moop-weight" and alg == "ho-moop"
            )
            if value_aware:
                prev_list = [prev[(alg, vi)] for vi in range(len(values))]
                floats = [float(v) for v in values]
                if alg == "ho-cost":
                    results = ho.sweep_ho_cost(scn, est, prev_list, floats, eval_channels=ideal, opts=opts)
                else:
                    results = ho.sweep_moop(scn, est, prev_list, floats, eval_channels=ideal, opts=opts)
                for vi, (value, result) in enumerate(zip(values, results)):
                    if audit:
                        _audit_row(scn, ideal, result)
                    rows.append(_result_row(result, alg, axis, value, trial, point, live_timing))
                    traces.extend(_trace_rows(result, alg, axis, value, trial, point))
                    if result.status != STATUS_INFEASIBLE:
                        prev[(alg, vi)] = result.assoc
            else:
                result, row, trace_rows = _execute(
                    scn, alg, est, ideal, prev[(alg, 0)], opts, None, axis, values[0], trial, point,
                    audit, live_timing,
                )
                traces.extend(trace_rows)
                for vi, value in enumerate(values):
                    if result is None:
                        stale = dict(row)
                        stale["sweep_value"] = value
                        rows.append(stale)
                        continue
                    costs = _costs_for(scn, axis, float(value))
                    adjusted = dict(row)
                    adjusted["sweep_value"] = value
                    adjusted["ho_sum_rate_gbps"] = ho.effective_sum_rate(result, costs) / 1e9
                    rows.append(adjusted)
                    if result.status != STATUS_INFEASIBLE:
                        prev[(alg, vi)] = result.assoc
    return rows, traces


def _costs_for(scn: Scenario, axis: str, value: float):
    from .metrics import HOCostParams

    if axis == "ho-cost":
        return HOCostParams(
            eta_thz=value, eta_umb=value, min_retained=scn.min_retained, moop_weight=scn.moop_weight
        )
    return HOCostParams(
        eta_thz=scn.eta_thz, eta_umb=scn.eta_umb, min_retained=scn.min_retained, moop_weight=value
    )


def _result_row(result: SolveResult, alg, sweep_param, value, trial, point, live_timing) -> dict:
    return {
        "algorithm": alg,
        "sweep_param": sweep_param,
        "sweep_value": value,
        "trial": trial,
        "point": point,
        "sum_rate_gbps": result.sum_rate_bps / 1e9,
        "ho_sum_rate_gbps": result.ho_sum_rate_bps / 1e9,
        "total_hos": result.total_hos,
        "status": result.status,
        "iters": result.iterations,
        "wall_ms": int(round(result.wall_time_s * 1000.0)) if live_timing else 0,
    }


def _trace_rows(result: SolveResult, alg, sweep_param, value, trial, point) -> list[dict]:
    out = []
    for i, (obj, pen) in enumerate(zip(result.objective_trace, result.penalty_trace)):
        out.append(
            {
                "algorithm": alg,
                "sweep_param": sweep_param,
                "sweep_value": value,
                "trial": trial,
                "point": point,
                "iteration": i,
                "objective": obj,
                "penalty": pen,
            }
        )
    return out


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.9g}"
    return str(value)


def _write_csv(path: Path, columns: tuple[str, ...], rows: list[dict]) -> None:
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in columns])


def _summarize(rows: list[dict]) -> list[dict]:
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        groups.setdefault((row["algorithm"], row["sweep_param"], row["sweep_value"]), []).append(row)
    out = []
    for (alg, param, value), members in sorted(groups.items(), key=lambda kv: (kv[0][0], float(kv[0][2]))):
        ok = [m for m in members if m["status"] == "Converged" or m["status"] == "NotConverged"]
        rates = np.array([m["sum_rate_gbps"] for m in ok]) if ok else np.zeros(0)
        ho_rates = np.array([m["ho_sum_rate_gbps"] for m in ok]) if ok else np.zeros(0)
        hos = np.array([m["total_hos"] for m in ok], dtype=float) if ok else np.zeros(0)

        def mean_se(arr: np.ndarray) -> tuple[float, float]:
            if not arr.size:
                return 0.0, 0.0
            se = float(np.std(arr, ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else 0.0
            return float(np.mean(arr)), se

        m_rate, se_rate = mean_se(rates)
        m_ho_rate, se_ho_rate = mean_se(ho_rates)
        m_hos, se_hos = mean_se(hos)
        out.append(
            {
                "algorithm": alg,
                "sweep_param": param,
                "sweep_value": value,
                "n_rows": len(members),
                "n_ok": len(ok),
                "mean_sum_rate_gbps": m_rate,
                "se_sum_rate_gbps": se_rate,
                "mean_ho_sum_rate_gbps": m_ho_rate,
                "se_ho_sum_rate_gbps": se_ho_rate,
                "mean_total_hos": m_hos,
                "se_total_hos": se_hos,
            }
        )
    return out


SUMMARY_COLUMNS = (
    "algorithm",
    "sweep_param",
    "sweep_value",
    "n_rows",
    "n_ok",
    "mean_sum_rate_gbps",
    "se_sum_rate_gbps",
    "mean_ho_sum_rate_gbps",
    "se_ho_sum_rate_gbps",
    "mean_total_hos",
    "se_total_hos",
)


def run_experiment(
    scn: Scenario,
    algorithms: list[str],
    *,
    sweep: str | None = None,
    values: list | None = None,
    trials: int = 1,
    seed: int | None = None,
    out_dir: str | Path = "mbnsim-out",
    audit: bool = False,
    workers: int = 1,
    live_timing: bool = False,
    opts: fp.AlgoOptions | None = None,
) -> dict:
    """Run the experiment grid and persist results; returns output paths."""
    for alg in algorithms:
        if alg not in ALGORITHMS:
            raise ConfigError([f"unknown algorithm {alg!r}"])
    if sweep is not None and sweep not in SWEEPS:
        raise ConfigError([f"unknown sweep axis {sweep!r}; choose from {sorted(SWEEPS)}"])
    seed = scn.seed if seed is None else seed
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t_start = time.perf_counter()

    rows: list[dict] = []
    traces: list[dict] = []
    if sweep is None:
        tasks = [
            (_run_cell, (scn, algorithms, "none", 0, 0, trial, seed, opts, audit, live_timing))
            for trial in range(trials)
        ]
    elif SWEEPS[sweep]["chained"]:
        vals = values if values is not None else sweep_values(scn, sweep)
        tasks = [
            (_run_trial_chained, (scn, algorithms, sweep, vals, trial, seed, opts, audit, live_timing))
            for trial in range(trials)
        ]
    else:
        vals = values if values is not None else sweep_values(scn, sweep)
        apply = SWEEPS[sweep]["apply"]
        tasks = []
        for vi, value in enumerate(vals):
            scn_v = apply(scn, value)
            problems = scn_v.validate()
            if problems:
                raise ConfigError([f"sweep value {value}: {p}" for p in problems])
            for trial in range(trials):
                tasks.append(
                    (_run_cell, (scn_v, algorithms, sweep, value, vi, trial, seed, opts, audit, live_timing))
                )

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(fn, *args) for fn, args in tasks]
            for future in futures:
                r, t = future.result()
                rows.extend(r)
                traces.extend(t)
    else:
        for fn, args in tasks:
            r, t = fn(*args)
            rows.extend(r)
            traces.extend(t)

    key = lambda row: (row["algorithm"], float(row["sweep_value"]), row["trial"], row["point"])
    rows.sort(key=key)
    traces.sort(key=lambda r: (r["algorithm"], float(r["sweep_value"]), r["trial"], r["point"], r["iteration"]))

    paths = {
        "results": out / "results.csv",
        "trace": out / "trace.csv",
        "summary": out / "summary.csv",
        "manifest": out / "manifest.json",
    }
    _write_csv(paths["results"], RESULT_COLUMNS, rows)
    _write_csv(paths["trace"], TRACE_COLUMNS, traces)
    _write_csv(paths["summary"], SUMMARY_COLUMNS, _summarize(rows))
    manifest = {
        "config": config_dump(scn),
        "algorithms": list(algorithms),
        "sweep": sweep,
        "values": values if values is not None else (sweep_values(scn, sweep) if sweep else []),
        "trials": trials,
        "seed": seed,
        "version": __version__,
        "wall_time_s": time.perf_counter() - t_start,
        "n_rows": len(rows),
    }
    paths["manifest"].write_text(json.dumps(manifest, indent=2, sort_keys=True))

    statuses = {row["status"] for row in rows}
    ok = any(s in ("Converged", "NotConverged") for s in statuses)
    paths["all_failed"] = rows and not ok
    return paths


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="mbnsim",
        description="Cooperative dual-band network simulator: joint association and hybrid beamforming",
    )
    parser.add_argument("--config", type=str, default=None, help="scenario config file (key = value lines)")
    parser.add_argument(
        "--algorithm",
        type=str,
        default="algo1",
        help="comma-separated algorithms: " + "|".join(ALGORITHMS),
    )
    parser.add_argument("--hbf", choices=("fc", "pc"), default=None, help="hybrid beamforming architecture")
    parser.add_argument("--sweep", choices=sorted(SWEEPS), default=None, help="sweep axis")
    parser.add_argument("--trials", type=int, default=1)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", type=str, default="mbnsim-out")
    parser.add_argument("--audit", action="store_true", help="recompute every row's sum rate independently")
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--live-timing", action="store_true", help="write measured wall_ms into the CSV")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="config override")
    args = parser.parse_args(argv)

    try:
        text = Path(args.config).read_text() if args.config else ""
        overrides: dict[str, str] = {}
        for item in args.set:
            if "=" not in item:
                raise ConfigError([f"--set expects KEY=VALUE, got {item!r}"])
            k, v = item.split("=", 1)
            overrides[k.strip()] = v.strip()
        if args.hbf:
            overrides["hbf"] = args.hbf
        scn = scenario_from_config(text, overrides)
        algorithms = [a.strip() for a in args.algorithm.split(",") if a.strip()]
        for alg in algorithms:
            if alg not in ALGORITHMS:
                raise ConfigError([f"unknown algorithm {alg!r}; choose from {ALGORITHMS}"])
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    paths = run_experiment(
        scn,
        algorithms,
        sweep=args.sweep,
        trials=args.trials,
        seed=args.seed,
        out_dir=args.out,
        audit=args.audit,
        workers=args.workers,
        live_timing=args.live_timing,
    )
    if paths.pop("all_failed"):
        print("all trials failed", file=sys.stderr)
        return EXIT_ALL_FAILED
    for name, path in paths.items():
        print(f"{name}: {path}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
