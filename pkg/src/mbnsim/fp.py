"""Outer loop of the joint user-association / hybrid-beamforming solver.

Alternates closed-form fractional-programming auxiliary updates with inner
convex solves in which the binary-association penalty has been tangent-
linearized (majorization).  The penalized true utility is non-decreasing
across iterations; on convergence the relaxed associations are rounded,
repaired against the cluster/retention/handover caps, and a final inner solve
with frozen associations produces the reported beams.

Three objective modes share the loop: plain weighted sum-rate, the
multi-objective variant that subtracts a weighted handover count, and the
handover-cost mode that maximizes a concave lower bound built from per-band
log effective rates.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import baselines, subproblem
from .analog import (
    FULLY_CONNECTED,
    PARTIALLY_CONNECTED,
    AnalogBeamformer,
    analog_fc,
    analog_pc,
    effective_power_budget,
)
from .channel import BandParams, ChannelRealization, dbm_to_watts
from .metrics import AssociationState, HOCostParams, all_user_metrics, ho_aware_rates, ho_counts, total_hos
from .results import (
    STATUS_CONVERGED,
    STATUS_INFEASIBLE,
    STATUS_NOT_CONVERGED,
    BeamformerSet,
    SolveResult,
)
from .subproblem import HO_COST, SUM_RATE, WEIGHTED, HOTerms, Infeasible, SolveOptions, SubproblemSpec

LN2 = float(np.log(2.0))

MODE_SUM_RATE = "sum_rate"
MODE_MOOP = "moop"
MODE_HO_COST = "ho_cost"


@dataclass(frozen=True)
class AlgoOptions:
    """Outer-loop controls; tolerances follow the documented defaults."""

    l_max: int = 100
    eps_objective: float = 1e-3      # relative change of the penalized utility
    eps_penalty: float = 1e-4        # absolute change of the linearized penalty
    gamma_scale: float = 10.0        # initial penalty factor vs utility magnitude
    gamma_growth: float = 2.0
    gamma_limit: float = 1e9
    penalty_target_per_var: float = 1e-3
    rounding_threshold: float = 0.5
    starts: tuple[str, ...] = ("nearest", "uniform", "balanced")
    inner: SolveOptions = field(default_factory=SolveOptions)


@dataclass
class FPState:
    """Auxiliary variables and surrogate SINRs of one outer iteration."""

    mu: np.ndarray
    zeta: np.ndarray
    gamma_t: np.ndarray
    gamma_u: np.ndarray
    iteration: int = 0


def quadratic_transform(amplitude: complex, denominator: float, aux: complex) -> float:
    """Ratio surrogate 2 Re{aux* amplitude} - |aux|^2 denominator.

    Maximized over aux at amplitude / denominator where it equals
    |amplitude|^2 / denominator, the original ratio.
    """
    if denominator <= 0.0:
        raise ValueError("denominator must be positive")
    return float(2.0 * np.real(np.conj(aux) * amplitude) - abs(aux) ** 2 * denominator)


def optimal_aux(amplitude: complex, denominator: float) -> complex:
    if denominator <= 0.0:
        raise ValueError("denominator must be positive")
    return amplitude / denominator


def _aux_updates(
    eff: np.ndarray, eff_abs: np.ndarray | None, beams: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form auxiliaries plus the true SINRs at the current beams.

    eff: (B*N, K) normalized channels; beams: (B*N, K).  Noise power is 1 in
    normalized units.  Returns (aux (K,) complex, sinr (K,) real).
    """
    s = eff.conj().T @ beams
    diag = np.diag(s)
    denom = np.sum(np.abs(s) ** 2, axis=1) - np.abs(diag) ** 2 + 1.0
    if eff_abs is not None:
        st = eff_abs.conj().T @ beams
        denom = denom + np.sum(np.abs(st) ** 2, axis=1)
    return np.conj(diag) / denom, np.abs(diag) ** 2 / denom


def update_mu(
    k: int,
    channels: ChannelRealization,
    beams: BeamformerSet,
    sigma_abs_sq: float,
    band: BandParams,
) -> complex:
    """Closed-form THz auxiliary for user k at the current beams (physical units)."""
    combined = beams.combined_thz()  # (B, M, K)
    cross = np.einsum("bm,bmi->i", channels.thz_direct[:, k, :].conj().reshape(channels.n_tbs, -1), combined)
    num = np.conj(cross[k])
    den = float(np.sum(np.abs(cross) ** 2) - np.abs(cross[k]) ** 2 + sigma_abs_sq + band.noise_power_w)
    return complex(num / den)


def update_zeta(
    k: int,
    channels: ChannelRealization,
    beams: BeamformerSet,
    band: BandParams,
) -> complex:
    combined = beams.combined_umb()
    cross = np.einsum("bm,bmi->i", channels.umb[:, k, :].conj().reshape(channels.n_ubs, -1), combined)
    num = np.conj(cross[k])
    den = float(np.sum(np.abs(cross) ** 2) - np.abs(cross[k]) ** 2 + band.noise_power_w)
    return complex(num / den)


def mm_linearize_penalty(prev: np.ndarray) -> tuple[np.ndarray, float]:
    """Tangent majorization of sum(x - x^2) at `prev`: coefficients and constant.

    L(x) = sum(coeff * x) + const with coeff = 1 - 2 prev, const = sum(prev^2);
    L(x) >= sum(x - x^2) everywhere with equality at x = prev.
    """
    prev = np.asarray(prev, dtype=float)
    return 1.0 - 2.0 * prev, float(np.sum(prev**2))


def _true_sinr(eff: np.ndarray, eff_abs: np.ndarray | None, beams: np.ndarray) -> np.ndarray:
    """True normalized SINRs at the given beams (noise = 1)."""
    s = eff.conj().T @ beams
    diag = np.abs(np.diag(s)) ** 2
    denom = np.sum(np.abs(s) ** 2, axis=1) - diag + 1.0
    if eff_abs is not None:
        st = eff_abs.conj().T @ beams
        denom = denom + np.sum(np.abs(st) ** 2, axis=1)
    return diag / denom


class _Workspace:
    """Normalized arrays shared by every iteration of one solve."""

    def __init__(self, scenario, channels: ChannelRealization):
        self.K = channels.n_users
        self.B_T, self.B_U = channels.n_tbs, channels.n_ubs
        arch = FULLY_CONNECTED if scenario.hbf == "fc" else PARTIALLY_CONNECTED
        build = analog_fc if arch == FULLY_CONNECTED else analog_pc

        self.analog_t: list[AnalogBeamformer] = []
        self.analog_u: list[AnalogBeamformer] = []
        self.eff_t = self.eff_abs = self.eff_u = None
        self.pbar_t = self.pbar_u = 0.0
        thz, umb = scenario.thz, scenario.umb
        if self.B_T:
            self.pbar_t = effective_power_budget(
                dbm_to_watts(scenario.p_max_thz_dbm), scenario.m_thz, self.K, arch
            )
            scale = np.sqrt(self.pbar_t / thz.noise_power_w)
            blocks, blocks_abs = [], []
            for b in range(self.B_T):
                # steer from the geometric responses when available: blocked
                # users still get a meaningful phase column instead of a
                # degenerate all-ones one
                if channels.thz_response is not None:
                    bf = build(channels.thz_response[b].T)
                else:
                    bf = build(channels.thz_direct[b].T)
                self.analog_t.append(bf)
                blocks.append(bf.matrix.conj().T @ channels.thz_direct[b].T * scale)
                blocks_abs.append(bf.matrix.conj().T @ channels.thz_absorption[b].T * scale)
            self.eff_t = np.vstack(blocks)
            self.eff_abs = np.vstack(blocks_abs)
        if self.B_U:
            self.pbar_u = effective_power_budget(
                dbm_to_watts(scenario.p_max_umb_dbm), scenario.m_umb, self.K, arch
            )
            scale = np.sqrt(self.pbar_u / umb.noise_power_w)
            blocks = []
            for r in range(self.B_U):
                bf = build(channels.umb[r].T)
                self.analog_u.append(bf)
                blocks.append(bf.matrix.conj().T @ channels.umb[r].T * scale)
            self.eff_u = np.vstack(blocks)

    def matched_beams(self, assoc_t: np.ndarray | None, assoc_u: np.ndarray | None):
        """Matched filters with an equal per-BS power split over associated users."""
        w = u = None
        if self.B_T:
            w = np.zeros((self.B_T * self.K, self.K), complex)
            for b in range(self.B_T):
                users = np.flatnonzero(assoc_t[b] > 0)
                share = 1.0 / max(len(users), 1)
                for k in users:
                    col = self.eff_t[b * self.K : (b + 1) * self.K, k]
                    nrm = np.linalg.norm(col)
                    if nrm > 0:
                        w[b * self.K : (b + 1) * self.K, k] = col / nrm * np.sqrt(share)
        if self.B_U:
            u = np.zeros((self.B_U * self.K, self.K), complex)
            for r in range(self.B_U):
                users = np.flatnonzero(assoc_u[r] > 0)
                share = 1.0 / max(len(users), 1)
                for k in users:
                    col = self.eff_u[r * self.K : (r + 1) * self.K, k]
                    nrm = np.linalg.norm(col)
                    if nrm > 0:
                        u[r * self.K : (r + 1) * self.K, k] = col / nrm * np.sqrt(share)
        return w, u

    def beam_set(self, w: np.ndarray | None, u: np.ndarray | None, m_thz: int, m_umb: int) -> BeamformerSet:
        """Physical-unit beamformers from normalized stacked beams."""
        bt = np.zeros((self.B_T, m_thz, self.K), complex)
        dt = np.zeros((self.B_T, self.K, self.K), complex)
        for b in range(self.B_T):
            bt[b] = self.analog_t[b].matrix
            if w is not None:
                dt[b] = w[b * self.K : (b + 1) * self.K, :] * np.sqrt(self.pbar_t)
        bu = np.zeros((self.B_U, m_umb, self.K), complex)
        du = np.zeros((self.B_U, self.K, self.K), complex)
        for r in range(self.B_U):
            bu[r] = self.analog_u[r].matrix
            if u is not None:
                du[r] = u[r * self.K : (r + 1) * self.K, :] * np.sqrt(self.pbar_u)
        return BeamformerSet(thz_analog=bt, thz_digital=dt, umb_analog=bu, umb_digital=du)


def _round_band(
    relaxed: np.ndarray,
    upper: np.ndarray,
    cluster: np.ndarray,
    threshold: float,
    prev: np.ndarray | None,
    new_cap: np.ndarray | None,
    must_serve: set[int],
) -> np.ndarray:
    """Threshold rounding with cluster-cap repair (largest relaxed values win).

    new_cap bounds the number of additions relative to `prev` per user (the
    log-concavity region of the handover-aware rate); must_serve users keep at
    least one association so log-domain objectives stay finite.
    """
    n_bs, n_users = relaxed.shape
    out = np.zeros((n_bs, n_users), dtype=np.int8)
    for k in range(n_users):
        order = np.argsort(-relaxed[:, k], kind="stable")
        new_used = 0
        chosen: list[int] = []
        for b in order:
            if relaxed[b, k] < threshold:
                break
            if upper[b, k] <= 0 or len(chosen) >= cluster[k]:
                continue
            is_new = prev is not None and prev[b, k] == 0
            if new_cap is not None and is_new and new_used >= new_cap[k]:
                continue
            chosen.append(b)
            new_used += int(is_new)
        if k in must_serve and not chosen:
            for b in order:
                if upper[b, k] <= 0 or relaxed[b, k] <= 0:
                    continue
                is_new = prev is not None and prev[b, k] == 0
                if new_cap is not None and is_new and new_used >= new_cap[k]:
                    continue
                chosen.append(b)
                break
        out[chosen, k] = 1
    return out


def _repair_retention(
    a_bin: np.ndarray | None,
    b_bin: np.ndarray | None,
    a_rel: np.ndarray | None,
    b_rel: np.ndarray | None,
    prev_t: np.ndarray | None,
    prev_u: np.ndarray | None,
    cluster_t: np.ndarray | None,
    cluster_u: np.ndarray | None,
    retain: np.ndarray,
) -> None:
    """Promote previously-held BSs (largest relaxed value first) until each
    user keeps its retention floor; evicts the weakest newly-added entry when
    a cluster is full.  Mutates the binary matrices in place."""
    n_users = len(retain)
    for k in range(int(n_users)):
        def kept() -> int:
            total = 0
            if a_bin is not None and prev_t is not None:
                total += int(np.sum(prev_t[:, k] * a_bin[:, k]))
            if b_bin is not None and prev_u is not None:
                total += int(np.sum(prev_u[:, k] * b_bin[:, k]))
            return total

        guard = 0
        while kept() < retain[k] and guard < 16:
            guard += 1
            candidates = []  # (value, band, bs)
            if a_bin is not None and prev_t is not None:
                for b in np.flatnonzero((prev_t[:, k] > 0) & (a_bin[:, k] == 0)):
                    candidates.append((a_rel[b, k], "t", int(b)))
            if b_bin is not None and prev_u is not None:
                for r in np.flatnonzero((prev_u[:, k] > 0) & (b_bin[:, k] == 0)):
                    candidates.append((b_rel[r, k], "u", int(r)))
            if not candidates:
                break
            candidates.sort(key=lambda t: (-t[0], t[1], t[2]))
            _, band, idx = candidates[0]
            mat, rel, prev, cap = (
                (a_bin, a_rel, prev_t, cluster_t) if band == "t" else (b_bin, b_rel, prev_u, cluster_u)
            )
            if np.sum(mat[:, k]) >= cap[k]:
                new_entries = np.flatnonzero((mat[:, k] > 0) & (prev[:, k] == 0))
                if not len(new_entries):
                    break
                weakest = new_entries[np.argmin(rel[new_entries, k])]
                mat[weakest, k] = 0
            mat[idx, k] = 1


def run_algorithm1(
    scenario,
    channels: ChannelRealization,
    *,
    eval_channels: ChannelRealization | None = None,
    prev_assoc: AssociationState | None = None,
    fixed_assoc: tuple[np.ndarray, np.ndarray] | None = None,
    objective_mode: str = MODE_SUM_RATE,
    costs: HOCostParams | None = None,
    opts: AlgoOptions | None = None,
    init: SolveResult | None = None,
) -> SolveResult:
    """Joint association and digital beamforming for one trajectory point.

    `channels` is what the optimizer sees; `eval_channels` (default: the same)
    is used for the reported rates, which supports the imperfect-CSI studies.
    `fixed_assoc` pins the association (benchmark and refinement path).

    Free-association solves run from two deterministic starts, nearest-BS and
    uniform fractional, and keep the better final objective: the tangent
    majorization can lock into whichever association it starts from, and the
    neutral fractional start lets the first iteration be decided by rates
    alone (the penalty gradient vanishes at one half).
    """
    if fixed_assoc is None and init is None:
        opts = opts or AlgoOptions()
        starts = list(opts.starts)
        if prev_assoc is not None and "previous" not in starts:
            # staying on the previous point's serving sets is a strong
            # hypothesis whenever handover history exists
            starts.append("previous")
        runs = [
            _run_once(
                scenario,
                channels,
                eval_channels=eval_channels,
                prev_assoc=prev_assoc,
                fixed_assoc=None,
                objective_mode=objective_mode,
                costs=costs,
                opts=opts,
                init=None,
                start=start,
            )
            for start in starts
        ]
        return _best_of(runs, objective_mode, costs or scenario.ho)
    return _run_once(
        scenario,
        channels,
        eval_channels=eval_channels,
        prev_assoc=prev_assoc,
        fixed_assoc=fixed_assoc,
        objective_mode=objective_mode,
        costs=costs,
        opts=opts,
        init=init,
        start="nearest",
    )


def _score(result: SolveResult, mode: str, costs: HOCostParams) -> float:
    if result.status == STATUS_INFEASIBLE:
        return -np.inf
    if mode == MODE_MOOP:
        return result.sum_rate_bps / 1e9 - costs.moop_weight * result.total_hos
    if mode == MODE_HO_COST:
        return result.ho_sum_rate_bps
    return result.sum_rate_bps


def _best_of(runs: list[SolveResult], mode: str, costs: HOCostParams) -> SolveResult:
    total_wall = sum(r.wall_time_s for r in runs)
    winner = runs[0]
    for candidate in runs[1:]:
        if _score(candidate, mode, costs) > _score(winner, mode, costs):
            winner = candidate
    winner.wall_time_s = total_wall
    return winner


def _balanced_association(
    gains: np.ndarray, cluster: int, upper: np.ndarray, n_users: int
) -> np.ndarray:
    """Greedy gain-sorted one-BS-per-user matching with per-BS load caps.

    Spreads users across BSs as an exclusive-service starting hypothesis; the
    relaxed iterations are free to add the remaining cluster slots.
    """
    n_bs = gains.shape[0]
    capacity = max(1, int(np.ceil(n_users * cluster / max(n_bs, 1))))
    order = sorted(
        ((gains[b, k], b, k) for b in range(n_bs) for k in range(n_users) if upper[b, k] > 0 and gains[b, k] > 0),
        key=lambda t: (-t[0], t[1], t[2]),
    )
    load = np.zeros(n_bs, dtype=int)
    out = np.zeros((n_bs, n_users))
    assigned: set[int] = set()
    for _, b, k in order:
        if k in assigned or load[b] >= capacity:
            continue
        out[b, k] = 1.0
        load[b] += 1
        assigned.add(k)
    return out


def _run_once(
    scenario,
    channels: ChannelRealization,
    *,
    eval_channels: ChannelRealization | None,
    prev_assoc: AssociationState | None,
    fixed_assoc: tuple[np.ndarray, np.ndarray] | None,
    objective_mode: str,
    costs: HOCostParams | None,
    opts: AlgoOptions | None,
    init: SolveResult | None,
    start: str,
) -> SolveResult:
    t0 = time.perf_counter()
    opts = opts or AlgoOptions()
    costs = costs or scenario.ho
    eval_channels = eval_channels or channels
    ws = _Workspace(scenario, channels)
    K, B_T, B_U = ws.K, ws.B_T, ws.B_U
    mode = objective_mode
    if mode not in (MODE_SUM_RATE, MODE_MOOP, MODE_HO_COST):
        raise ValueError(f"unknown objective mode {mode!r}")
    if mode in (MODE_MOOP, MODE_HO_COST) and prev_assoc is None:
        mode = MODE_SUM_RATE  # first trajectory point has no handover history

    prev_t = prev_assoc.thz.astype(float) if (prev_assoc is not None and B_T) else None
    prev_u = prev_assoc.umb.astype(float) if (prev_assoc is not None and B_U) else None

    cluster_t = np.full(K, float(scenario.cluster_t)) if B_T else None
    cluster_u = np.full(K, float(scenario.cluster_u)) if B_U else None
    qos = np.full(K, float(scenario.qos_gbps))
    psi = channels.blockage.astype(float) if B_T else None

    # association bounds: blockage caps THz; pinned runs clamp both sides
    pinned = fixed_assoc is not None
    if pinned:
        fixed_t = fixed_assoc[0].astype(float) if B_T else None
        fixed_u = fixed_assoc[1].astype(float) if B_U else None
        a_lb = a_ub = fixed_t
        b_lb = b_ub = fixed_u
    else:
        a_lb = np.zeros((B_T, K)) if B_T else None
        a_ub = psi
        b_lb = np.zeros((B_U, K)) if B_U else None
        b_ub = np.ones((B_U, K)) if B_U else None

    # handover-aware plumbing
    retain = None
    if mode in (MODE_MOOP, MODE_HO_COST) and costs.min_retained > 0:
        # only previously-held links that are still reachable (unblocked)
        # count toward the retention floor
        prev_counts = np.zeros(K)
        if prev_t is not None:
            prev_counts += (prev_t * psi).sum(axis=0)
        if prev_u is not None:
            prev_counts += prev_u.sum(axis=0)
        retain = np.minimum(float(costs.min_retained), prev_counts)
    ho_terms = None
    if mode == MODE_HO_COST:
        active_t = tuple(
            int(k) for k in range(K) if B_T and np.any(psi[:, k] * np.linalg.norm(channels.thz_direct[:, k, :], axis=1) > 0)
        )
        active_u = tuple(int(k) for k in range(K)) if B_U else ()
        ho_terms = HOTerms(
            eta_t=costs.eta_thz if B_T else 0.0,
            eta_u=costs.eta_umb if B_U else 0.0,
            band_t_active=active_t,
            band_u_active=active_u,
        )

    # starting association and beams
    if pinned:
        a0 = fixed_t.copy() if B_T else None
        b0 = fixed_u.copy() if B_U else None
    elif init is not None and init.assoc is not None:
        a0 = init.assoc.thz.astype(float) if B_T else None
        b0 = init.assoc.umb.astype(float) if B_U else None
    elif start == "uniform":
        a0 = b0 = None
        if B_T:
            avail = np.maximum(psi.sum(axis=0), 1.0)
            a0 = psi * np.minimum(1.0, scenario.cluster_t / avail)[None, :]
        if B_U:
            b0 = np.full((B_U, K), min(1.0, scenario.cluster_u / B_U))
    elif start == "balanced":
        a0 = b0 = None
        if B_T:
            gains = np.linalg.norm(channels.thz_direct, axis=2)
            a0 = _balanced_association(gains, scenario.cluster_t, psi, K)
        if B_U:
            gains = np.linalg.norm(channels.umb, axis=2)
            b0 = _balanced_association(gains, scenario.cluster_u, np.ones((B_U, K)), K)
    elif start == "previous" and prev_assoc is not None:
        a0 = prev_t * psi if B_T else None
        b0 = prev_u.copy() if B_U else None
    else:
        nearest = baselines.nearest_association(channels, scenario.cluster_t, scenario.cluster_u)
        a0 = nearest.thz.astype(float) if B_T else None
        b0 = nearest.umb.astype(float) if B_U else None
    if init is not None and init.beams is not None and init.beams.thz_digital.size + init.beams.umb_digital.size:
        w = (
            np.vstack([init.beams.thz_digital[b] for b in range(B_T)]) / np.sqrt(ws.pbar_t)
            if B_T
            else None
        )
        u = (
            np.vstack([init.beams.umb_digital[r] for r in range(B_U)]) / np.sqrt(ws.pbar_u)
            if B_U
            else None
        )
    else:
        w, u = ws.matched_beams(a0, b0)
    a_rel, b_rel = a0, b0

    spec = SubproblemSpec(
        n_users=K,
        n_tbs=B_T,
        n_rf_t=K if B_T else 0,
        eff_thz=ws.eff_t,
        eff_thz_abs=ws.eff_abs,
        alpha_lb=a_lb,
        alpha_ub=a_ub,
        cluster_t=cluster_t,
        bw_t_gbps=scenario.thz.bandwidth_hz / 1e9 if B_T else 0.0,
        prev_thz=prev_t,
        n_ubs=B_U,
        n_rf_u=K if B_U else 0,
        eff_umb=ws.eff_u,
        beta_lb=b_lb,
        beta_ub=b_ub,
        cluster_u=cluster_u,
        bw_u_gbps=scenario.umb.bandwidth_hz / 1e9 if B_U else 0.0,
        prev_umb=prev_u,
        qos_gbps=qos,
        retain_min=retain,
        mode=HO_COST if mode == MODE_HO_COST else SUM_RATE,
        ho=ho_terms,
    )

    n_assoc_vars = (B_T + B_U) * K
    xi = costs.moop_weight if mode == MODE_MOOP else 0.0

    def true_objective(wv, uv, av, bv, gamma_pen):
        """Penalized utility with true (non-surrogate) SINRs, in Gbps units."""
        rate_t = np.zeros(K)
        rate_u = np.zeros(K)
        if B_T and wv is not None:
            rate_t = spec.bw_t_gbps * np.log2(1.0 + _true_sinr(ws.eff_t, ws.eff_abs, wv))
        if B_U and uv is not None:
            rate_u = spec.bw_u_gbps * np.log2(1.0 + _true_sinr(ws.eff_u, None, uv))
        resid = 0.0
        if not pinned:
            if av is not None:
                resid += float(np.sum(av - av**2))
            if bv is not None:
                resid += float(np.sum(bv - bv**2))
        if mode == MODE_HO_COST:
            util = 1.0
            for k in ho_terms.band_t_active:
                cs = costs.eta_thz * float(np.sum((1.0 - prev_t[:, k]) * av[:, k]))
                util += (np.log(max(1.0 - cs, 1e-12)) + np.log(max(rate_t[k], 1e-12))) / (2.0 * K)
            for k in ho_terms.band_u_active:
                cs = costs.eta_umb * float(np.sum((1.0 - prev_u[:, k]) * bv[:, k]))
                util += (np.log(max(1.0 - cs, 1e-12)) + np.log(max(rate_u[k], 1e-12))) / (2.0 * K)
        else:
            util = float(np.sum(rate_t) + np.sum(rate_u))
            if xi > 0.0:
                ho_load = 0.0
                if prev_t is not None and av is not None:
                    ho_load += float(np.sum((1.0 - prev_t) * av))
                if prev_u is not None and bv is not None:
                    ho_load += float(np.sum((1.0 - prev_u) * bv))
                util -= xi * ho_load
        return util - gamma_pen * resid, resid, rate_t, rate_u

    f0, _, rt0, ru0 = true_objective(w, u, a_rel, b_rel, 0.0)
    gamma = opts.gamma_scale * max(abs(f0), 1.0)
    trace: list[float] = []
    penalties: list[float] = []
    statuses: list[str] = []
    lin_value_prev = None
    converged = False
    iterations = 0
    infeasible_reason = None
    sol = None

    # a pinned handover-cost solve needs no relaxation loop: the effective
    # weights are fixed, and the refinement below iterates the weighted
    # problem to its own fixed point (count caps checked here since the
    # relaxed constraints never run)
    if pinned and mode == MODE_HO_COST:
        if B_T and prev_t is not None:
            counts = ((1.0 - prev_t) * fixed_t).sum(axis=0)
            if np.any(costs.eta_thz * counts >= 1.0):
                infeasible_reason = "pinned association exceeds the handover count cap"
        if B_U and prev_u is not None:
            counts = ((1.0 - prev_u) * fixed_u).sum(axis=0)
            if np.any(costs.eta_umb * counts >= 1.0):
                infeasible_reason = "pinned association exceeds the handover count cap"
    loop_iters = 0 if (pinned and mode == MODE_HO_COST) else opts.l_max
    if infeasible_reason is not None:
        loop_iters = 0
    state = FPState(
        mu=np.zeros(K, complex),
        zeta=np.zeros(K, complex),
        gamma_t=np.zeros(K),
        gamma_u=np.zeros(K),
    )
    for it in range(loop_iters):
        iterations = it + 1
        state.iteration = it
        if B_T and w is not None:
            state.mu, state.gamma_t = _aux_updates(ws.eff_t, ws.eff_abs, w)
            spec.mu, spec.sinr_prev_t = state.mu, state.gamma_t
        if B_U and u is not None:
            state.zeta, state.gamma_u = _aux_updates(ws.eff_u, None, u)
            spec.zeta, spec.sinr_prev_u = state.zeta, state.gamma_u
        obj_const = 0.0
        if pinned:
            lin_a = np.zeros((B_T, K)) if B_T else None
            lin_b = np.zeros((B_U, K)) if B_U else None
        else:
            lin_a = lin_b = None
            if B_T:
                coeff, const = mm_linearize_penalty(a_rel)
                lin_a = -gamma * coeff
                obj_const -= gamma * const
            if B_U:
                coeff, const = mm_linearize_penalty(b_rel)
                lin_b = -gamma * coeff
                obj_const -= gamma * const
        if xi > 0.0:
            if B_T and prev_t is not None:
                lin_a = (lin_a if lin_a is not None else 0) - xi * (1.0 - prev_t)
            if B_U and prev_u is not None:
                lin_b = (lin_b if lin_b is not None else 0) - xi * (1.0 - prev_u)
        if mode == MODE_HO_COST:
            obj_const += 1.0
        spec.lin_alpha, spec.lin_beta, spec.obj_const = lin_a, lin_b, obj_const

        try:
            sol = subproblem.solve(spec, opts=opts.inner)
        except Infeasible as exc:
            infeasible_reason = str(exc)
            break
        except subproblem.MaxIterations:
            # keep the best iterate found so far and fall through to rounding
            statuses.append("failed")
            break
        w, u = sol.w, sol.u
        a_rel = sol.alpha if sol.alpha is not None else a_rel
        b_rel = sol.beta if sol.beta is not None else b_rel
        statuses.append(sol.status)

        f, resid, _, _ = true_objective(w, u, a_rel, b_rel, gamma if not pinned else 0.0)
        trace.append(f)
        penalties.append(resid)
        lin_value = 0.0
        if not pinned:
            if B_T:
                coeff, const = mm_linearize_penalty(a_rel)
                lin_value += float(np.sum(a_rel * coeff) + const)
            if B_U:
                coeff, const = mm_linearize_penalty(b_rel)
                lin_value += float(np.sum(b_rel * coeff) + const)
        if it >= 1:
            obj_ok = abs(trace[-1] - trace[-2]) < opts.eps_objective * max(1.0, abs(trace[-1]))
            pen_ok = pinned or lin_value_prev is None or abs(lin_value - lin_value_prev) < opts.eps_penalty
            if obj_ok and pen_ok:
                if pinned or resid <= opts.penalty_target_per_var * max(n_assoc_vars, 1):
                    converged = True
                    break
                if gamma < opts.gamma_limit:
                    gamma *= opts.gamma_growth
        lin_value_prev = lin_value

    if infeasible_reason is not None:
        assoc = AssociationState(
            thz=np.zeros((B_T, K), np.int8),
            umb=np.zeros((B_U, K), np.int8),
            prev_thz=prev_assoc.thz if prev_assoc is not None else None,
            prev_umb=prev_assoc.umb if prev_assoc is not None else None,
        )
        return SolveResult(
            assoc=assoc,
            beams=ws.beam_set(None, None, scenario.m_thz, scenario.m_umb),
            rates_bps=np.zeros(K),
            rates_t_bps=np.zeros(K),
            rates_u_bps=np.zeros(K),
            status=STATUS_INFEASIBLE,
            iterations=iterations,
            objective_trace=trace,
            penalty_trace=penalties,
            inner_statuses=statuses,
            wall_time_s=time.perf_counter() - t0,
            meta={"reason": infeasible_reason, "mode": objective_mode},
        )

    # binarize and refine with associations frozen
    if pinned:
        a_bin = fixed_t.astype(np.int8) if B_T else np.zeros((0, K), np.int8)
        b_bin = fixed_u.astype(np.int8) if B_U else np.zeros((0, K), np.int8)
    else:
        must_t = set(ho_terms.band_t_active) if mode == MODE_HO_COST else set()
        must_u = set(ho_terms.band_u_active) if mode == MODE_HO_COST else set()
        cap_t = cap_u = None
        if mode == MODE_HO_COST:
            cap_t = np.full(K, int(np.ceil(1.0 / costs.eta_thz) - 1)) if B_T else None
            cap_u = np.full(K, int(np.ceil(1.0 / costs.eta_umb) - 1)) if B_U else None
        a_bin = (
            _round_band(a_rel, a_ub, cluster_t, opts.rounding_threshold, prev_t, cap_t, must_t)
            if B_T
            else np.zeros((0, K), np.int8)
        )
        b_bin = (
            _round_band(b_rel, b_ub, cluster_u, opts.rounding_threshold, prev_u, cap_u, must_u)
            if B_U
            else np.zeros((0, K), np.int8)
        )
        if retain is not None:
            _repair_retention(
                a_bin if B_T else None,
                b_bin if B_U else None,
                a_rel,
                b_rel,
                prev_t,
                prev_u,
                cluster_t,
                cluster_u,
                retain,
            )

    refine = replace(spec)
    refine.alpha_lb = refine.alpha_ub = a_bin.astype(float) if B_T else None
    refine.beta_lb = refine.beta_ub = b_bin.astype(float) if B_U else None
    refine.lin_alpha = np.zeros((B_T, K)) if B_T else None
    refine.lin_beta = np.zeros((B_U, K)) if B_U else None
    refine.obj_const = 0.0
    if mode == MODE_HO_COST:
        # associations are frozen, so the interruption factors are constants
        # and the true effective sum-rate is a weighted rate maximization;
        # the concave lower bound is no longer needed
        refine.mode = WEIGHTED
        refine.ho = None
        if B_T:
            counts = ((1.0 - prev_t) * a_bin).sum(axis=0)
            refine.weight_t = np.maximum(0.0, 1.0 - costs.eta_thz * counts)
        if B_U:
            counts = ((1.0 - prev_u) * b_bin).sum(axis=0)
            refine.weight_u = np.maximum(0.0, 1.0 - costs.eta_umb * counts)
    if B_T and w is not None:
        refine.mu, refine.sinr_prev_t = _aux_updates(ws.eff_t, ws.eff_abs, w)
    if B_U and u is not None:
        refine.zeta, refine.sinr_prev_u = _aux_updates(ws.eff_u, None, u)
    status = STATUS_CONVERGED if converged or pinned else STATUS_NOT_CONVERGED
    try:
        if mode == MODE_HO_COST:
            # the weighted objective has its own fixed point: iterate the
            # auxiliaries on the frozen-association problem until stable
            prev_obj = None
            for _ in range(20):
                final = subproblem.solve(refine, opts=opts.inner)
                w, u = final.w, final.u
                statuses.append(final.status)
                if B_T and w is not None:
                    refine.mu, refine.sinr_prev_t = _aux_updates(ws.eff_t, ws.eff_abs, w)
                if B_U and u is not None:
                    refine.zeta, refine.sinr_prev_u = _aux_updates(ws.eff_u, None, u)
                if prev_obj is not None and abs(final.objective - prev_obj) < opts.eps_objective * max(
                    1.0, abs(final.objective)
                ):
                    break
                prev_obj = final.objective
        else:
            final = subproblem.solve(refine, opts=opts.inner)
            w, u = final.w, final.u
            statuses.append(final.status)
    except Infeasible as exc:
        status = STATUS_INFEASIBLE
        infeasible_reason = f"frozen-association refinement: {exc}"
    except subproblem.MaxIterations:
        status = STATUS_NOT_CONVERGED  # report the pre-refinement beams

    assoc = AssociationState(
        thz=a_bin,
        umb=b_bin,
        prev_thz=prev_assoc.thz if prev_assoc is not None else None,
        prev_umb=prev_assoc.umb if prev_assoc is not None else None,
    )
    beams = ws.beam_set(w, u, scenario.m_thz, scenario.m_umb)
    if status == STATUS_INFEASIBLE:
        metric = {
            "sinr_t": np.zeros(K),
            "sinr_u": np.zeros(K),
            "rates_t_bps": np.zeros(K),
            "rates_u_bps": np.zeros(K),
            "rates_bps": np.zeros(K),
        }
    else:
        metric = all_user_metrics(
            eval_channels, assoc, beams, scenario.thz if B_T else None, scenario.umb if B_U else None
        )
    counts_t, counts_u = ho_counts(assoc)
    ho_rates = ho_aware_rates(metric["rates_t_bps"], metric["rates_u_bps"], counts_t, counts_u, costs)
    resid_final = 0.0
    if not pinned and a_rel is not None:
        resid_final += float(np.sum(a_rel - a_rel**2))
    if not pinned and b_rel is not None:
        resid_final += float(np.sum(b_rel - b_rel**2))
    return SolveResult(
        assoc=assoc,
        beams=beams,
        rates_bps=metric["rates_bps"],
        rates_t_bps=metric["rates_t_bps"],
        rates_u_bps=metric["rates_u_bps"],
        sinr_t=metric["sinr_t"],
        sinr_u=metric["sinr_u"],
        sum_rate_bps=float(np.sum(metric["rates_bps"])),
        ho_counts_t=counts_t,
        ho_counts_u=counts_u,
        ho_sum_rate_bps=float(np.sum(ho_rates)),
        total_hos=total_hos(counts_t, counts_u),
        objective_trace=trace,
        penalty_trace=penalties,
        inner_statuses=statuses,
        penalty_residual=resid_final,
        status=status,
        iterations=iterations,
        wall_time_s=time.perf_counter() - t0,
        meta={"gamma_final": gamma, "mode": objective_mode, "reason": infeasible_reason, "start": start},
    )
