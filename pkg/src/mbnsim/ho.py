"""Handover-aware allocation: the cost-based method and the weighted
multi-objective method, plus the scalar helpers behind their convexity
arguments (concave lower bound of the effective sum-rate, transformed QoS,
and the log-concavity region caps)."""

from __future__ import annotations

import dataclasses
import logging

import numpy as np

from . import fp
from .channel import ChannelRealization
from .metrics import AssociationState, HOCostParams
from .results import SolveResult

log = logging.getLogger(__name__)

_TINY = 1e-300


def jensen_objective(ho_rates_t: np.ndarray, ho_rates_u: np.ndarray) -> float:
    """Concave lower bound of the effective sum-rate.

    For per-band effective rates (natural-log units are internal):
    (1 / 2K) * sum_k [ln r_t_k + ln r_u_k] + 1, which never exceeds
    sum_k (r_t_k + r_u_k).  Non-positive inputs are clamped and logged since
    the bound's log terms are undefined there.
    """
    rt = np.asarray(ho_rates_t, dtype=float)
    ru = np.asarray(ho_rates_u, dtype=float)
    if rt.shape != ru.shape:
        raise ValueError("per-band rate vectors must have matching shapes")
    k = rt.size
    if k == 0:
        raise ValueError("need at least one user")
    if np.any(rt <= 0) or np.any(ru <= 0):
        log.warning("jensen objective clamped non-positive rate terms")
    return float(np.sum(np.log(np.maximum(rt, _TINY)) + np.log(np.maximum(ru, _TINY))) / (2.0 * k) + 1.0)


def transform_qos_jensen(rate_t: float, rate_u: float, threshold: float) -> float:
    """Margin of the transformed QoS: (ln r_t + ln r_u) / 2 - ln(threshold / 2).

    A non-negative margin implies the original constraint r_t + r_u >= threshold.
    """
    if rate_t <= 0 or rate_u <= 0:
        return -np.inf
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    return float(0.5 * (np.log(rate_t) + np.log(rate_u)) - np.log(threshold / 2.0))


def ho_addition_cap(eta: float) -> int:
    """Largest integer handover count keeping the effective-rate factor positive:
    the count must stay strictly below 1/eta."""
    if not 0.0 < eta < 1.0:
        raise ValueError("eta must lie in (0, 1)")
    cap = int(np.ceil(1.0 / eta)) - 1
    return max(cap, 0)


def check_log_concavity_region(prev_assoc: np.ndarray, eta: float) -> tuple[np.ndarray, float]:
    """Linear-constraint data for the handover-count cap of one band.

    Returns (coefficients, bound) with coefficients = (1 - prev) so that the
    constraint reads sum_b coefficients[b, k] * assoc[b, k] < 1/eta per user.
    """
    if not 0.0 < eta < 1.0:
        raise ValueError("eta must lie in (0, 1)")
    prev = np.asarray(prev_assoc, dtype=float)
    return 1.0 - prev, 1.0 / eta


def ho_log_rate_curvature(x: float, y: float, step: float = 1e-4) -> float:
    """Finite-difference second derivative in x of log((1-y) log(1 + x - x^2)).

    Non-positive on x in (0, 1), y in [0, 1): the quantity behind the
    log-concavity of the per-band effective rate.
    """

    def g(xv: float) -> float:
        inner = np.log(1.0 + xv - xv * xv)
        return float(np.log((1.0 - y) * inner))

    return (g(x + step) - 2.0 * g(x) + g(x - step)) / step**2


def run_ho_cost(
    scenario,
    channels: ChannelRealization,
    prev_assoc: AssociationState,
    *,
    costs: HOCostParams | None = None,
    eval_channels: ChannelRealization | None = None,
    opts: fp.AlgoOptions | None = None,
    init: SolveResult | None = None,
    safeguard: bool = True,
    plain_solution: SolveResult | None = None,
) -> SolveResult:
    """Handover-cost allocation for one trajectory point.

    The main path maximizes the concave lower bound of the effective sum-rate
    under the transformed QoS, retention floor and handover-count caps.  As a
    safeguard, the plain sum-rate solution's association is also evaluated
    (pinned, beams re-optimized for the interruption-weighted objective)
    whenever it satisfies those constraints, and the better effective
    sum-rate wins: the lower-bound maximizer trades sum for balance and must
    never fall below simply running cost-free allocation and paying the
    interruptions.  `plain_solution` lets sweep harnesses share that
    reference run across cost values.
    """
    cost_run = fp.run_algorithm1(
        scenario,
        channels,
        eval_channels=eval_channels,
        prev_assoc=prev_assoc,
        objective_mode=fp.MODE_HO_COST,
        costs=costs,
        opts=opts,
        init=init,
    )
    if not safeguard or init is not None or prev_assoc is None:
        return cost_run
    plain = plain_solution
    if plain is None:
        plain = fp.run_algorithm1(
            scenario,
            channels,
            eval_channels=eval_channels,
            prev_assoc=prev_assoc,
            objective_mode=fp.MODE_SUM_RATE,
            costs=costs,
            opts=opts,
        )
    if plain.status == fp.STATUS_INFEASIBLE:
        return cost_run
    costs = costs or scenario.ho
    repaired = _repair_for_cost_region(plain, prev_assoc, costs, scenario, channels)
    pinned = fp.run_algorithm1(
        scenario,
        channels,
        eval_channels=eval_channels,
        prev_assoc=prev_assoc,
        fixed_assoc=repaired,
        objective_mode=fp.MODE_HO_COST,
        costs=costs,
        opts=opts,
    )
    if pinned.status == fp.STATUS_INFEASIBLE:
        return cost_run
    if pinned.ho_sum_rate_bps > cost_run.ho_sum_rate_bps or cost_run.status == fp.STATUS_INFEASIBLE:
        pinned.meta["safeguard"] = "plain-association"
        return pinned
    return cost_run


def _repair_for_cost_region(
    plain: SolveResult,
    prev_assoc: AssociationState,
    costs: HOCostParams,
    scenario,
    channels: ChannelRealization,
) -> tuple[np.ndarray, np.ndarray]:
    """Fit the plain solution's association into the cost-aware constraint set.

    Excess newly-added links beyond the count caps are dropped weakest-first
    (at the cap boundary their band factor was non-positive anyway) and the
    retention floor is restored from still-reachable previous links.
    """
    b_t, b_u = channels.n_tbs, channels.n_ubs
    k = channels.n_users
    psi = channels.blockage.astype(float) if b_t else None
    prev_t = prev_assoc.thz.astype(float) * psi if b_t else None
    prev_u = prev_assoc.umb.astype(float) if b_u else None
    # rank kept links by how much transmit power the plain solution gave them
    score_t = score_u = None
    a_bin = np.zeros((b_t, k), np.int8)
    b_bin = np.zeros((b_u, k), np.int8)
    if b_t:
        power = np.linalg.norm(plain.beams.thz_digital, axis=1)  # (B, K)
        score_t = plain.assoc.thz * (power + 1e-12)
        a_bin = fp._round_band(
            score_t,
            plain.assoc.thz.astype(float),
            np.full(k, float(scenario.cluster_t)),
            1e-15,
            prev_t,
            np.full(k, ho_addition_cap(costs.eta_thz)),
            set(),
        )
    if b_u:
        power = np.linalg.norm(plain.beams.umb_digital, axis=1)
        score_u = plain.assoc.umb * (power + 1e-12)
        b_bin = fp._round_band(
            score_u,
            plain.assoc.umb.astype(float),
            np.full(k, float(scenario.cluster_u)),
            1e-15,
            prev_u,
            np.full(k, ho_addition_cap(costs.eta_umb)),
            set(),
        )
    if costs.min_retained > 0:
        reachable = np.zeros(k)
        if b_t:
            reachable += prev_t.sum(axis=0)
        if b_u:
            reachable += prev_u.sum(axis=0)
        retain = np.minimum(float(costs.min_retained), reachable)
        fp._repair_retention(
            a_bin if b_t else None,
            b_bin if b_u else None,
            (score_t + prev_t) if b_t else None,
            (score_u + prev_u) if b_u else None,
            prev_t,
            prev_u,
            np.full(k, float(scenario.cluster_t)) if b_t else None,
            np.full(k, float(scenario.cluster_u)) if b_u else None,
            retain,
        )
    return a_bin, b_bin


def run_moop(
    scenario,
    channels: ChannelRealization,
    prev_assoc: AssociationState | None,
    *,
    costs: HOCostParams | None = None,
    eval_channels: ChannelRealization | None = None,
    opts: fp.AlgoOptions | None = None,
    init: SolveResult | None = None,
) -> SolveResult:
    """Weighted-sum scalarization: sum-rate minus moop_weight x handover count."""
    return fp.run_algorithm1(
        scenario,
        channels,
        eval_channels=eval_channels,
        prev_assoc=prev_assoc,
        objective_mode=fp.MODE_MOOP,
        costs=costs,
        opts=opts,
        init=init,
    )


def moop_score(result: SolveResult, weight: float) -> float:
    """Scalarized value (Gbps) of an existing solution at a given weight."""
    if result.status == fp.STATUS_INFEASIBLE:
        return -np.inf
    return result.sum_rate_bps / 1e9 - weight * result.total_hos


def effective_sum_rate(result: SolveResult, costs: HOCostParams) -> float:
    """Handover-aware sum-rate of an existing solution under other cost factors."""
    from .metrics import ho_aware_rates

    if result.status == fp.STATUS_INFEASIBLE:
        return 0.0
    return float(
        np.sum(
            ho_aware_rates(
                result.rates_t_bps, result.rates_u_bps, result.ho_counts_t, result.ho_counts_u, costs
            )
        )
    )


def _fits_cost_region(result: SolveResult, costs: HOCostParams, qos_bps: float) -> bool:
    """Whether a solution stays valid when re-used at different cost factors:
    handover counts inside the log-concavity caps, QoS still met effectively."""
    if result.status == fp.STATUS_INFEASIBLE:
        return False
    if np.any(result.ho_counts_t > ho_addition_cap(costs.eta_thz)):
        return False
    if np.any(result.ho_counts_u > ho_addition_cap(costs.eta_umb)):
        return False
    if qos_bps > 0:
        from .metrics import ho_aware_rates

        effective = ho_aware_rates(
            result.rates_t_bps, result.rates_u_bps, result.ho_counts_t, result.ho_counts_u, costs
        )
        if np.any(effective < qos_bps * (1 - 1e-9)):
            return False
    return True


def sweep_moop(
    scenario,
    channels: ChannelRealization,
    prev_assocs: list[AssociationState | None],
    weights: list[float],
    *,
    eval_channels: ChannelRealization | None = None,
    opts: fp.AlgoOptions | None = None,
) -> list[SolveResult]:
    """Scalarization sweep at one trajectory point.

    Runs a fresh solve per weight, then lets every weight pick the best
    solution from the whole pool under its own scalarized objective.
    Selecting from a shared candidate set makes the handover count
    non-increasing in the weight (standard weighted-sum exchange argument),
    and no weight can be worse off than its own solve.  The first weight's
    fresh solve is returned untouched when it wins, so a leading zero weight
    still reproduces the plain solver bit for bit.
    """
    if sorted(weights) != list(weights):
        raise ValueError("weights must be ascending")
    fresh = [
        run_moop(
            scenario,
            channels,
            prev_assocs[vi],
            costs=HOCostParams(
                eta_thz=scenario.eta_thz,
                eta_umb=scenario.eta_umb,
                min_retained=scenario.min_retained,
                moop_weight=weight,
            ),
            eval_channels=eval_channels,
            opts=opts,
        )
        for vi, weight in enumerate(weights)
    ]
    results: list[SolveResult] = []
    for vi, weight in enumerate(weights):
        best = fresh[vi]
        for vj, candidate in enumerate(fresh):
            # handover counts are only comparable against the same history
            if candidate.status == fp.STATUS_INFEASIBLE or prev_assocs[vj] is not prev_assocs[vi]:
                continue
            if moop_score(candidate, weight) > moop_score(best, weight):
                best = candidate
        results.append(best)
    return results


def sweep_ho_cost(
    scenario,
    channels: ChannelRealization,
    prev_assocs: list[AssociationState | None],
    etas: list[float],
    *,
    eval_channels: ChannelRealization | None = None,
    opts: fp.AlgoOptions | None = None,
) -> list[SolveResult]:
    """Cost-fraction sweep at one trajectory point.

    As in sweep_moop, every cost value picks from the pooled fresh solutions,
    restricted to candidates that stay inside its validity region (count caps,
    effective QoS), scoring by the effective sum-rate under that cost."""
    if sorted(etas) != list(etas):
        raise ValueError("cost fractions must be ascending")
    qos_bps = scenario.qos_gbps * 1e9
    all_costs = [
        HOCostParams(
            eta_thz=eta, eta_umb=eta, min_retained=scenario.min_retained, moop_weight=scenario.moop_weight
        )
        for eta in etas
    ]
    plain_cache: dict[int, SolveResult] = {}

    def plain_for(vi: int) -> SolveResult:
        key = id(prev_assocs[vi])
        if key not in plain_cache:
            plain_cache[key] = fp.run_algorithm1(
                scenario,
                channels,
                eval_channels=eval_channels,
                prev_assoc=prev_assocs[vi],
                objective_mode=fp.MODE_SUM_RATE,
                opts=opts,
            )
        return plain_cache[key]

    fresh = [
        run_ho_cost(
            scenario,
            channels,
            prev_assocs[vi],
            costs=all_costs[vi],
            eval_channels=eval_channels,
            opts=opts,
            plain_solution=plain_for(vi) if prev_assocs[vi] is not None else None,
        )
        for vi in range(len(etas))
    ]
    results: list[SolveResult] = []
    for vi, costs in enumerate(all_costs):
        best = fresh[vi]
        best_value = effective_sum_rate(best, costs)
        for vj, candidate in enumerate(fresh):
            if candidate is best or prev_assocs[vj] is not prev_assocs[vi]:
                continue
            if candidate.status == fp.STATUS_INFEASIBLE or not _fits_cost_region(candidate, costs, qos_bps):
                continue
            value = effective_sum_rate(candidate, costs)
            if value > best_value:
                best, best_value = candidate, value
        if best is not fresh[vi]:
            best = dataclasses.replace(best, ho_sum_rate_bps=best_value)
        results.append(best)
    return results
