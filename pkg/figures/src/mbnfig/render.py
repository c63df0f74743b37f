"""Render sweep and convergence figures from simulator CSV outputs.

The renderer is read-only over its input: a SHA-256 checksum of the CSV bytes
is embedded in the image metadata so any figure can be traced back to the
exact data file that produced it.
"""

from __future__ import annotations

import csv
import hashlib
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

CHECKSUM_KEY = "mbnsim-input-sha256"

SWEEP_COLUMNS = ("algorithm", "trial", "sum_rate_gbps")
CONVERGENCE_COLUMNS = ("algorithm", "trial", "point", "iteration", "objective")

X_UNITS = {
    "absorption": "absorption coefficient [1/m]",
    "blockage": "blocker density [1/m]",
    "bs-split": "number of THz BSs",
    "antennas": "array scale factor",
    "cluster": "cluster size per band",
    "ho-cost": "handover cost fraction",
    "qos": "rate requirement [Gbps]",
    "csi": "CSI uncertainty",
    "moop-weight": "handover weight [Gbps per handover]",
}

Y_LABELS = {
    "sum_rate_gbps": "sum rate [Gbps]",
    "ho_sum_rate_gbps": "effective sum rate [Gbps]",
    "total_hos": "total handovers",
}


class SchemaError(ValueError):
    """The CSV lacks columns the requested figure needs."""


def _load(csv_path: str | Path) -> tuple[list[dict], bytes]:
    raw = Path(csv_path).read_bytes()
    rows = list(csv.DictReader(raw.decode().splitlines()))
    if not rows:
        raise SchemaError(f"{csv_path}: no data rows")
    return rows, raw


def _require(rows: list[dict], needed: tuple[str, ...], x_column: str) -> None:
    have = set(rows[0].keys())
    missing = [c for c in (*needed, x_column) if c not in have]
    if missing:
        raise SchemaError(
            f"missing columns {missing}; figure needs {sorted(set(needed) | {x_column})}, "
            f"file has {sorted(have)}"
        )


def _render_sweep(rows: list[dict], x_column: str, y_column: str, ax) -> None:
    _require(rows, SWEEP_COLUMNS if y_column == "sum_rate_gbps" else ("algorithm", "trial", y_column), x_column)
    # mean with standard error across rows (trials x trajectory points)
    groups: dict[tuple[str, float], list[float]] = defaultdict(list)
    for row in rows:
        groups[(row["algorithm"], float(row[x_column]))].append(float(row[y_column]))
    algorithms = sorted({alg for alg, _ in groups})
    single_sample = all(len(v) <= 1 for v in groups.values())
    for alg in algorithms:
        xs = sorted(x for a, x in groups if a == alg)
        means = np.array([np.mean(groups[(alg, x)]) for x in xs])
        if single_sample:
            ax.plot(xs, means, marker="o", label=alg)
        else:
            errs = np.array(
                [
                    np.std(groups[(alg, x)], ddof=1) / np.sqrt(len(groups[(alg, x)]))
                    if len(groups[(alg, x)]) > 1
                    else 0.0
                    for x in xs
                ]
            )
            ax.errorbar(xs, means, yerr=errs, marker="o", capsize=3, label=alg)
    sweep_param = rows[0].get("sweep_param", "")
    ax.set_xlabel(X_UNITS.get(sweep_param, x_column) if x_column == "sweep_value" else x_column)
    ax.set_ylabel(Y_LABELS.get(y_column, y_column))
    ax.grid(True, alpha=0.3)
    ax.legend()


def _render_convergence(rows: list[dict], x_column: str, ax) -> None:
    _require(rows, CONVERGENCE_COLUMNS, x_column if x_column != "sweep_value" else "iteration")
    x_col = "iteration" if x_column == "sweep_value" else x_column
    traces: dict[tuple, list[tuple[float, float]]] = defaultdict(list)
    for row in rows:
        key = (row["algorithm"], row["trial"], row.get("point", "0"), row.get("sweep_value", ""))
        traces[key].append((float(row[x_col]), float(row["objective"])))
    seen: set[str] = set()
    colors = plt.rcParams["axes.prop_cycle"].by_key()["color"]
    algorithms = sorted({key[0] for key in traces})
    color_of = {alg: colors[i % len(colors)] for i, alg in enumerate(algorithms)}
    for key in sorted(traces):
        alg = key[0]
        pts = sorted(traces[key])
        xs = [p[0] for p in pts]
        ys = [p[1] for p in pts]
        label = alg if alg not in seen else None
        seen.add(alg)
        ax.plot(xs, ys, marker=".", alpha=0.8, color=color_of[alg], label=label)
    ax.set_xlabel("iteration")
    ax.set_ylabel("penalized utility [Gbps]")
    ax.grid(True, alpha=0.3)
    ax.legend()


def render(
    csv_path: str | Path,
    kind: str,
    out_path: str | Path,
    x_column: str = "sweep_value",
    y_column: str = "sum_rate_gbps",
) -> Path:
    """Render one figure; returns the output path.

    kind 'sweep' plots mean y (with standard-error bars when multiple rows
    fall on a point) against the x column, one line per algorithm; kind
    'convergence' plots objective against iteration from a trace file.
    """
    if kind not in ("sweep", "convergence"):
        raise ValueError(f"unknown figure kind {kind!r}")
    rows, raw = _load(csv_path)
    digest = hashlib.sha256(raw).hexdigest()
    fig, ax = plt.subplots(figsize=(7.0, 4.4), dpi=140)
    try:
        if kind == "sweep":
            _render_sweep(rows, x_column, y_column, ax)
        else:
            _render_convergence(rows, x_column, ax)
        out = Path(out_path)
        out.parent.mkdir(parents=True, exist_ok=True)
        fig.tight_layout()
        fig.savefig(out, metadata={CHECKSUM_KEY: digest, "Software": "mbnfig"})
    finally:
        plt.close(fig)
    return Path(out_path)
