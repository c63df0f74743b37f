"""SINRs, per-user rates, handover counts and handover-aware utilities."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import BandParams, ChannelRealization, molecular_noise_variance
from .results import BeamformerSet


@dataclass
class AssociationState:
    """Binary association matrices for the current point (and optionally the previous).

    thz: (B_T, K); umb: (B_U, K).  Relaxed [0, 1] values exist only inside the
    solver; anything stored here must be binary.
    """

    thz: np.ndarray = field(default_factory=lambda: np.zeros((0, 0), np.int8))
    umb: np.ndarray = field(default_factory=lambda: np.zeros((0, 0), np.int8))
    prev_thz: np.ndarray | None = None
    prev_umb: np.ndarray | None = None

    def __post_init__(self) -> None:
        for name in ("thz", "umb"):
            arr = getattr(self, name)
            if arr.size and not np.isin(arr, (0, 1)).all():
                raise ValueError(f"{name} association entries must be binary")
        for name in ("prev_thz", "prev_umb"):
            arr = getattr(self, name)
            if arr is not None and arr.size and not np.isin(arr, (0, 1)).all():
                raise ValueError(f"{name} association entries must be binary")


@dataclass(frozen=True)
class HOCostParams:
    """Handover economics: per-band time-loss fractions, the retention floor,
    and the weight trading sum-rate against handover count in the
    multi-objective mode."""

    eta_thz: float = 0.4
    eta_umb: float = 0.4
    min_retained: int = 1
    moop_weight: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 < self.eta_thz < 1.0 or not 0.0 < self.eta_umb < 1.0:
            raise ValueError("handover cost fractions must lie in (0, 1)")
        if self.min_retained < 0:
            raise ValueError("min_retained must be non-negative")
        if self.moop_weight < 0.0:
            raise ValueError("moop_weight must be non-negative")


def _band_gains(
    channels: np.ndarray, assoc: np.ndarray, analog: np.ndarray, digital: np.ndarray
) -> np.ndarray:
    """Cross-gain matrix S[k, i] = sum_b assoc[b, i] h[b, k]^H F_b w[b, :, i]."""
    if channels.shape[0] == 0:
        n_users = assoc.shape[1] if assoc.size else 0
        return np.zeros((n_users, n_users), complex)
    beams = np.einsum("bmn,bnk->bmk", analog, digital, optimize=True)  # (B, M, K)
    cross = np.einsum("bkm,bmi->bki", channels.conj(), beams, optimize=True)
    masked = cross * assoc[:, None, :]
    return masked.sum(axis=0)


def thz_sinr(
    k: int,
    channels: ChannelRealization,
    assoc: AssociationState,
    beams: BeamformerSet,
    sigma_abs_sq: float,
    band: BandParams,
) -> float:
    """Downlink THz SINR of user k, including absorption re-radiation noise."""
    gains = _band_gains(channels.thz_direct, assoc.thz, beams.thz_analog, beams.thz_digital)
    desired = np.abs(gains[k, k]) ** 2
    interference = np.sum(np.abs(gains[k, :]) ** 2) - np.abs(gains[k, k]) ** 2
    return float(desired / (interference + sigma_abs_sq + band.noise_power_w))


def umb_sinr(
    k: int,
    channels: ChannelRealization,
    assoc: AssociationState,
    beams: BeamformerSet,
    band: BandParams,
) -> float:
    gains = _band_gains(channels.umb, assoc.umb, beams.umb_analog, beams.umb_digital)
    desired = np.abs(gains[k, k]) ** 2
    interference = np.sum(np.abs(gains[k, :]) ** 2) - np.abs(gains[k, k]) ** 2
    return float(desired / (interference + band.noise_power_w))


def user_rate(sinr_thz: float, sinr_umb: float, bw_thz_hz: float, bw_umb_hz: float) -> float:
    """Aggregate dual-connectivity rate in bits/second."""
    if sinr_thz < 0.0 or sinr_umb < 0.0:
        raise ValueError("SINRs must be non-negative")
    return bw_thz_hz * np.log2(1.0 + sinr_thz) + bw_umb_hz * np.log2(1.0 + sinr_umb)


def all_user_metrics(
    channels: ChannelRealization,
    assoc: AssociationState,
    beams: BeamformerSet,
    thz_band: BandParams | None,
    umb_band: BandParams | None,
) -> dict:
    """Vectorized per-user SINRs and rates for both bands.

    Returns sinr_t, sinr_u, rates_t_bps, rates_u_bps, rates_bps arrays (K,).
    """
    n_users = channels.n_users
    sinr_t = np.zeros(n_users)
    sinr_u = np.zeros(n_users)
    if channels.n_tbs and thz_band is not None:
        gains = _band_gains(channels.thz_direct, assoc.thz, beams.thz_analog, beams.thz_digital)
        sigma = molecular_noise_variance(channels.thz_absorption, beams.combined_thz())
        desired = np.abs(np.diag(gains)) ** 2
        interference = np.sum(np.abs(gains) ** 2, axis=1) - desired
        sinr_t = desired / (interference + sigma + thz_band.noise_power_w)
    if channels.n_ubs and umb_band is not None:
        gains = _band_gains(channels.umb, assoc.umb, beams.umb_analog, beams.umb_digital)
        desired = np.abs(np.diag(gains)) ** 2
        interference = np.sum(np.abs(gains) ** 2, axis=1) - desired
        sinr_u = desired / (interference + umb_band.noise_power_w)
    bw_t = thz_band.bandwidth_hz if thz_band is not None else 0.0
    bw_u = umb_band.bandwidth_hz if umb_band is not None else 0.0
    rates_t = bw_t * np.log2(1.0 + sinr_t)
    rates_u = bw_u * np.log2(1.0 + sinr_u)
    return {
        "sinr_t": sinr_t,
        "sinr_u": sinr_u,
        "rates_t_bps": rates_t,
        "rates_u_bps": rates_u,
        "rates_bps": rates_t + rates_u,
    }


def naive_user_rates(
    channels: ChannelRealization,
    assoc: AssociationState,
    beams: BeamformerSet,
    thz_band: BandParams | None,
    umb_band: BandParams | None,
) -> np.ndarray:
    """Loop-based rate evaluation kept deliberately independent of the
    vectorized path; used by the runner's audit mode and the tests."""
    n_users = channels.n_users
    rates = np.zeros(n_users)
    for k in range(n_users):
        g_t = 0.0
        if channels.n_tbs and thz_band is not None:
            sig = 0j
            interf = 0.0
            for kk in range(n_users):
                acc = 0j
                for b in range(channels.n_tbs):
                    acc += (
                        assoc.thz[b, kk]
                        * channels.thz_direct[b, k].conj()
                        @ beams.thz_analog[b]
                        @ beams.thz_digital[b][:, kk]
                    )
                if kk == k:
                    sig = acc
                else:
                    interf += abs(acc) ** 2
            sigma = 0.0
            for i in range(n_users):
                acc = 0j
                for b in range(channels.n_tbs):
                    acc += (
                        channels.thz_absorption[b, k].conj()
                        @ beams.thz_analog[b]
                        @ beams.thz_digital[b][:, i]
                    )
                sigma += abs(acc) ** 2
            g_t = abs(sig) ** 2 / (interf + sigma + thz_band.noise_power_w)
            rates[k] += thz_band.bandwidth_hz * np.log2(1.0 + g_t)
        if channels.n_ubs and umb_band is not None:
            sig = 0j
            interf = 0.0
            for kk in range(n_users):
                acc = 0j
                for r in range(channels.n_ubs):
                    acc += (
                        assoc.umb[r, kk]
                        * channels.umb[r, k].conj()
                        @ beams.umb_analog[r]
                        @ beams.umb_digital[r][:, kk]
                    )
                if kk == k:
                    sig = acc
                else:
                    interf += abs(acc) ** 2
            g_u = abs(sig) ** 2 / (interf + umb_band.noise_power_w)
            rates[k] += umb_band.bandwidth_hz * np.log2(1.0 + g_u)
    return rates


def ho_counts(assoc: AssociationState) -> tuple[np.ndarray, np.ndarray]:
    """Per-user handover counts: newly added BSs per band since the previous point.

    Dropping a BS costs nothing; with no previous point the counts are zero.
    """
    for arr in (assoc.thz, assoc.umb):
        if arr.size and not np.isin(arr, (0, 1)).all():
            raise ValueError("handover counting requires binary associations")
    n_users = assoc.thz.shape[1] if assoc.thz.size else assoc.umb.shape[1]
    if assoc.prev_thz is None:
        count_t = np.zeros(n_users, dtype=int)
    else:
        if not np.isin(assoc.prev_thz, (0, 1)).all():
            raise ValueError("handover counting requires binary associations")
        count_t = ((1 - assoc.prev_thz) * assoc.thz).sum(axis=0).astype(int)
    if assoc.prev_umb is None:
        count_u = np.zeros(n_users, dtype=int)
    else:
        if not np.isin(assoc.prev_umb, (0, 1)).all():
            raise ValueError("handover counting requires binary associations")
        count_u = ((1 - assoc.prev_umb) * assoc.umb).sum(axis=0).astype(int)
    return count_t, count_u


def ho_aware_rate(
    rate_t_bps: float,
    rate_u_bps: float,
    count_t: int,
    count_u: int,
    costs: HOCostParams,
) -> float:
    """Effective rate after handover interruptions, clamped at zero per band."""
    term_t = max(0.0, (1.0 - costs.eta_thz * count_t) * rate_t_bps)
    term_u = max(0.0, (1.0 - costs.eta_umb * count_u) * rate_u_bps)
    return term_t + term_u


def ho_aware_rates(
    rates_t_bps: np.ndarray,
    rates_u_bps: np.ndarray,
    counts_t: np.ndarray,
    counts_u: np.ndarray,
    costs: HOCostParams,
) -> np.ndarray:
    term_t = np.maximum(0.0, (1.0 - costs.eta_thz * counts_t) * rates_t_bps)
    term_u = np.maximum(0.0, (1.0 - costs.eta_umb * counts_u) * rates_u_bps)
    return term_t + term_u


def ho_sum_rate(per_user_ho_rates: np.ndarray) -> float:
    return float(np.sum(per_user_ho_rates))


def total_hos(counts_t: np.ndarray, counts_u: np.ndarray) -> int:
    return int(np.sum(counts_t) + np.sum(counts_u))
