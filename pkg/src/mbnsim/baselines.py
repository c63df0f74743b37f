"""Benchmark strategies: nearest/strongest association and regularized zero-forcing."""

from __future__ import annotations

import logging
import time

import numpy as np

from .channel import ChannelRealization
from .metrics import AssociationState, all_user_metrics, ho_aware_rates, ho_counts, total_hos
from .results import STATUS_CONVERGED, SolveResult

log = logging.getLogger(__name__)


def nearest_association(
    channels: ChannelRealization, cluster_t: int, cluster_u: int
) -> AssociationState:
    """Top-C association per user and band by channel norm.

    Blocked THz links (zero norm) are skipped; ties break toward the lower BS
    index.  Users with fewer usable TBSs than the cluster size keep what is
    available (logged as a shortfall).
    """
    n_users = channels.n_users
    thz = np.zeros((channels.n_tbs, n_users), dtype=np.int8)
    umb = np.zeros((channels.n_ubs, n_users), dtype=np.int8)
    if channels.n_tbs:
        gains = np.linalg.norm(channels.thz_direct, axis=2)  # (B, K)
        for k in range(n_users):
            order = np.argsort(-gains[:, k], kind="stable")
            picked = [b for b in order if gains[b, k] > 0][:cluster_t]
            thz[picked, k] = 1
            if len(picked) < cluster_t:
                log.warning("user %d: only %d of %d requested TBSs are usable", k, len(picked), cluster_t)
    if channels.n_ubs:
        gains = np.linalg.norm(channels.umb, axis=2)
        for k in range(n_users):
            order = np.argsort(-gains[:, k], kind="stable")
            picked = [r for r in order if gains[r, k] > 0][:cluster_u]
            umb[picked, k] = 1
    return AssociationState(thz=thz, umb=umb)


def rzf_beamformers(
    channels: ChannelRealization,
    assoc: AssociationState,
    analog_t: np.ndarray,
    analog_u: np.ndarray,
    budget_t: float,
    budget_u: float,
    reg_t: float | None = None,
    reg_u: float | None = None,
    noise_t: float = 1.0,
    noise_u: float = 1.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Regularized zero-forcing digital precoders, normalized to the exact budget.

    Effective channels are F^H (assoc * h); the default regularizer is the
    MMSE-style noise/budget ratio.  Per BS the returned precoder satisfies
    ||W||_F^2 == budget whenever any user is associated, and is zero otherwise.
    """
    if reg_t is None:
        reg_t = noise_t / budget_t if budget_t > 0 else 1.0
    if reg_u is None:
        reg_u = noise_u / budget_u if budget_u > 0 else 1.0
    if reg_t <= 0 or reg_u <= 0:
        raise ValueError("regularization must be positive")

    def _per_band(chans, mask, analog, budget, reg):
        n_bs = chans.shape[0]
        if not n_bs:
            return np.zeros((0, 0, 0), complex)
        n = analog.shape[2]
        k = chans.shape[1]
        out = np.zeros((n_bs, n, k), complex)
        for b in range(n_bs):
            eff = analog[b].conj().T @ (chans[b] * mask[b][:, None]).T  # (N, K)
            if not np.any(np.abs(eff) > 0):
                continue
            w = np.linalg.solve(eff @ eff.conj().T + reg * np.eye(n), eff)
            power = float(np.sum(np.abs(w) ** 2))
            if power > 0:
                out[b] = w * np.sqrt(budget / power)
        return out

    digital_t = _per_band(channels.thz_direct, assoc.thz, analog_t, budget_t, reg_t)
    digital_u = _per_band(channels.umb, assoc.umb, analog_u, budget_u, reg_u)
    return digital_t, digital_u


def run_zf(
    scenario,
    channels: ChannelRealization,
    *,
    eval_channels: ChannelRealization | None = None,
    prev_assoc: AssociationState | None = None,
    costs=None,
) -> SolveResult:
    """Nearest association plus RZF beams; closed form, no iterations."""
    from . import fp  # deferred: fp imports this module for the association rule

    t0 = time.perf_counter()
    eval_channels = eval_channels or channels
    costs = costs or scenario.ho
    ws = fp._Workspace(scenario, channels)
    assoc = nearest_association(channels, scenario.cluster_t, scenario.cluster_u)
    assoc.prev_thz = prev_assoc.thz if prev_assoc is not None else None
    assoc.prev_umb = prev_assoc.umb if prev_assoc is not None else None
    analog_t = np.stack([a.matrix for a in ws.analog_t]) if ws.B_T else np.zeros((0, 0, 0), complex)
    analog_u = np.stack([a.matrix for a in ws.analog_u]) if ws.B_U else np.zeros((0, 0, 0), complex)
    digital_t, digital_u = rzf_beamformers(
        channels,
        assoc,
        analog_t,
        analog_u,
        ws.pbar_t,
        ws.pbar_u,
        noise_t=scenario.thz.noise_power_w,
        noise_u=scenario.umb.noise_power_w,
    )
    beams = ws.beam_set(None, None, scenario.m_thz, scenario.m_umb)
    beams.thz_digital = digital_t
    beams.umb_digital = digital_u
    metric = all_user_metrics(
        eval_channels,
        assoc,
        beams,
        scenario.thz if ws.B_T else None,
        scenario.umb if ws.B_U else None,
    )
    counts_t, counts_u = ho_counts(assoc)
    ho_rates = ho_aware_rates(metric["rates_t_bps"], metric["rates_u_bps"], counts_t, counts_u, costs)
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
        status=STATUS_CONVERGED,
        iterations=0,
        wall_time_s=time.perf_counter() - t0,
        meta={"mode": "zf"},
    )


def run_b1(
    scenario,
    channels: ChannelRealization,
    *,
    eval_channels: ChannelRealization | None = None,
    prev_assoc: AssociationState | None = None,
    costs=None,
    opts=None,
) -> SolveResult:
    """Nearest association with the iterative beamforming stage."""
    from . import fp

    assoc = nearest_association(channels, scenario.cluster_t, scenario.cluster_u)
    result = fp.run_algorithm1(
        scenario,
        channels,
        eval_channels=eval_channels,
        prev_assoc=prev_assoc,
        fixed_assoc=(assoc.thz, assoc.umb),
        costs=costs,
        opts=opts,
    )
    result.meta["mode"] = "b1"
    return result
