"""Exhaustive reference solver for tiny instances.

Enumerates every binary association satisfying the cluster caps, blockage
mask and (when given) the retention/handover constraints, optimizes digital
beams for each candidate with the same inner solver used everywhere else, and
returns the best.  Ground truth for the solver tests; only viable at toy
sizes.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from . import fp
from .channel import ChannelRealization
from .metrics import AssociationState, HOCostParams
from .results import STATUS_INFEASIBLE, SolveResult
from .subproblem import Infeasible

MODE_SCORES = ("sum_rate", "moop", "ho_cost")


class BudgetExceeded(RuntimeError):
    """The association search space is too large to enumerate."""


def _subsets(indices: list[int], cluster: int, exact: bool) -> list[tuple[int, ...]]:
    """Association candidates for one user and band.

    For the plain sum-rate objective, enumerating exactly min(cluster, available)
    BSs loses nothing: any smaller association is reproduced inside a larger one
    by zero digital beams.  Handover objectives price each added BS, so there the
    enumeration covers every size up to the cap.
    """
    top = min(cluster, len(indices))
    sizes = [top] if exact else range(0, top + 1)
    out: list[tuple[int, ...]] = []
    for size in sizes:
        out.extend(itertools.combinations(indices, size))
    return out


def brute_force_solve(
    scenario,
    channels: ChannelRealization,
    *,
    prev_assoc: AssociationState | None = None,
    mode: str = "sum_rate",
    costs: HOCostParams | None = None,
    max_enum_budget: int = 100_000,
    opts: fp.AlgoOptions | None = None,
    eval_channels: ChannelRealization | None = None,
) -> SolveResult:
    if mode not in MODE_SCORES:
        raise ValueError(f"unknown mode {mode!r}")
    costs = costs or scenario.ho
    n_users = channels.n_users
    b_t, b_u = channels.n_tbs, channels.n_ubs

    exact = mode == "sum_rate"
    per_user_t = []
    per_user_u = []
    for k in range(n_users):
        usable = [b for b in range(b_t) if channels.blockage[b, k]] if b_t else []
        per_user_t.append(_subsets(usable, scenario.cluster_t, exact))
        per_user_u.append(_subsets(list(range(b_u)), scenario.cluster_u, exact))

    total = math.prod(len(s) for s in per_user_t) * math.prod(len(s) for s in per_user_u)
    if total > max_enum_budget:
        raise BudgetExceeded(f"{total} association candidates exceed budget {max_enum_budget}")

    retain = None
    caps_t = caps_u = None
    if mode in ("moop", "ho_cost") and prev_assoc is not None and costs.min_retained > 0:
        prev_counts = prev_assoc.thz.sum(axis=0) + prev_assoc.umb.sum(axis=0)
        retain = np.minimum(costs.min_retained, prev_counts)
    if mode == "ho_cost":
        from .ho import ho_addition_cap

        caps_t, caps_u = ho_addition_cap(costs.eta_thz), ho_addition_cap(costs.eta_umb)

    def score(result: SolveResult) -> float:
        if mode == "sum_rate":
            return result.sum_rate_bps
        if mode == "moop":
            return result.sum_rate_bps / 1e9 - costs.moop_weight * result.total_hos
        return result.ho_sum_rate_bps

    best: SolveResult | None = None
    best_score = -np.inf
    candidates = 0
    for combo_t in itertools.product(*per_user_t):
        for combo_u in itertools.product(*per_user_u):
            a = np.zeros((b_t, n_users), dtype=np.int8)
            b = np.zeros((b_u, n_users), dtype=np.int8)
            for k in range(n_users):
                a[list(combo_t[k]), k] = 1
                b[list(combo_u[k]), k] = 1
            if retain is not None:
                kept = (prev_assoc.thz * a).sum(axis=0) + (prev_assoc.umb * b).sum(axis=0)
                if np.any(kept < retain):
                    continue
            if mode == "ho_cost" and prev_assoc is not None:
                added_t = ((1 - prev_assoc.thz) * a).sum(axis=0)
                added_u = ((1 - prev_assoc.umb) * b).sum(axis=0)
                if np.any(added_t > caps_t) or np.any(added_u > caps_u):
                    continue
            candidates += 1
            try:
                result = fp.run_algorithm1(
                    scenario,
                    channels,
                    eval_channels=eval_channels,
                    prev_assoc=prev_assoc,
                    fixed_assoc=(a, b),
                    costs=costs,
                    opts=opts,
                )
            except Infeasible:
                continue
            if result.status == STATUS_INFEASIBLE:
                continue
            s = score(result)
            if s > best_score:
                best_score = s
                best = result

    if best is None:
        raise Infeasible("no association candidate is feasible")
    best.meta.update(oracle_candidates=candidates, oracle_score=best_score, mode=f"oracle-{mode}")
    return best
