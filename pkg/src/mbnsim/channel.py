"""Dual-band channel synthesis.

THz links: line-of-sight with Beer-Lambert molecular absorption, an absorption
re-radiation companion channel, and Bernoulli blockage.  Upper-mid-band links:
power-law path loss with Rician small-scale fading.  Both bands use the
near-field effective array responses from :mod:`mbnsim.arrays`.

Path-loss values here are amplitude (field) gains, not power gains; SINR
construction squares them exactly once.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .arrays import ArrayGeometry, UserPose, effective_array_response

SPEED_OF_LIGHT = 299_792_458.0
# thermal noise floor, -174 dBm/Hz
DEFAULT_NOISE_PSD = 10.0 ** (-174.0 / 10.0) * 1e-3


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0) * 1e-3


@dataclass(frozen=True)
class BandParams:
    """Radio parameters of one frequency band."""

    carrier_hz: float
    bandwidth_hz: float
    tx_gain_db: float = 0.0
    rx_gain_db: float = 0.0
    absorption_coeff_per_m: float = 0.0
    pathloss_exponent: float = 2.5
    rician_k: float = 10.0
    noise_psd_w_per_hz: float = DEFAULT_NOISE_PSD

    def __post_init__(self) -> None:
        if self.carrier_hz <= 0.0:
            raise ValueError("carrier_hz must be positive")
        if self.bandwidth_hz <= 0.0:
            raise ValueError("bandwidth_hz must be positive")
        if self.absorption_coeff_per_m < 0.0:
            raise ValueError("absorption coefficient must be non-negative")
        if self.rician_k < 0.0:
            raise ValueError("rician_k must be non-negative")
        if self.pathloss_exponent <= 0.0:
            raise ValueError("pathloss_exponent must be positive")
        if self.noise_psd_w_per_hz <= 0.0:
            raise ValueError("noise_psd_w_per_hz must be positive")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_hz

    @property
    def combined_gain(self) -> float:
        """sqrt(G_tx * G_rx) in linear units."""
        return np.sqrt(db_to_linear(self.tx_gain_db) * db_to_linear(self.rx_gain_db))

    @property
    def noise_power_w(self) -> float:
        return self.noise_psd_w_per_hz * self.bandwidth_hz


@dataclass
class ChannelRealization:
    """Per-(BS, user) channel vectors for one trajectory point.

    thz_direct / thz_absorption: (B_T, K, M_T); umb: (B_U, K, M_U);
    blockage: (B_T, K) in {0, 1}.  Blocked pairs carry all-zero THz vectors.
    thz_response optionally keeps the unmasked unit-modulus effective array
    responses: the analog stage is steered from user geometry, which the BS
    knows even for momentarily blocked links.
    """

    thz_direct: np.ndarray = field(default_factory=lambda: np.zeros((0, 0, 0), complex))
    thz_absorption: np.ndarray = field(default_factory=lambda: np.zeros((0, 0, 0), complex))
    umb: np.ndarray = field(default_factory=lambda: np.zeros((0, 0, 0), complex))
    blockage: np.ndarray = field(default_factory=lambda: np.zeros((0, 0), np.int8))
    thz_response: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.thz_direct.shape != self.thz_absorption.shape:
            raise ValueError("direct and absorption THz channels must share a shape")
        if self.blockage.shape != self.thz_direct.shape[:2]:
            raise ValueError("blockage shape must match the THz (BS, user) grid")
        if not np.isin(self.blockage, (0, 1)).all():
            raise ValueError("blockage entries must be binary")
        blocked = self.blockage == 0
        if self.thz_direct.size and np.any(np.abs(self.thz_direct[blocked]) > 0):
            raise ValueError("blocked pairs must have zero THz channels")

    @property
    def n_tbs(self) -> int:
        return self.thz_direct.shape[0]

    @property
    def n_ubs(self) -> int:
        return self.umb.shape[0]

    @property
    def n_users(self) -> int:
        if self.thz_direct.shape[0]:
            return self.thz_direct.shape[1]
        return self.umb.shape[1]


def thz_pathloss(distance: float, band: BandParams) -> float:
    """Spreading-plus-absorption amplitude gain c sqrt(G) / (4 pi f d) * exp(-K d / 2)."""
    if distance <= 0.0:
        raise ValueError(f"distance must be positive, got {distance}")
    spreading = SPEED_OF_LIGHT * band.combined_gain / (4.0 * np.pi * band.carrier_hz * distance)
    return spreading * np.exp(-0.5 * band.absorption_coeff_per_m * distance)


def thz_absorption_pathloss(distance: float, band: BandParams) -> float:
    """Amplitude gain of the absorption re-radiation path: spreading * sqrt(1 - exp(-K d))."""
    if distance <= 0.0:
        raise ValueError(f"distance must be positive, got {distance}")
    spreading = SPEED_OF_LIGHT * band.combined_gain / (4.0 * np.pi * band.carrier_hz * distance)
    return spreading * np.sqrt(1.0 - np.exp(-band.absorption_coeff_per_m * distance))


def umb_pathloss(distance: float, band: BandParams) -> float:
    """Power-law amplitude gain c sqrt(G) / (4 pi f) * d^(-exponent/2)."""
    if distance <= 0.0:
        raise ValueError(f"distance must be positive, got {distance}")
    return (
        SPEED_OF_LIGHT
        * band.combined_gain
        / (4.0 * np.pi * band.carrier_hz)
        * distance ** (-0.5 * band.pathloss_exponent)
    )


def sample_blockage(distance: float, density: float, rng: np.random.Generator) -> int:
    """Bernoulli line-of-sight indicator: 1 (clear) with probability exp(-density * d)."""
    if distance <= 0.0:
        raise ValueError("distance must be positive")
    if density < 0.0:
        raise ValueError("blocker density must be non-negative")
    return int(rng.random() < np.exp(-density * distance))


def sample_blockage_matrix(
    distances: np.ndarray, density: float, rng: np.random.Generator
) -> np.ndarray:
    """Independent per-(BS, user) blockage draws; 1 means clear."""
    if np.any(distances <= 0.0):
        raise ValueError("distances must be positive")
    if density < 0.0:
        raise ValueError("blocker density must be non-negative")
    probs = np.exp(-density * distances)
    return (rng.random(distances.shape) < probs).astype(np.int8)


def build_thz_channels(
    poses: list[list[UserPose]],
    geom: ArrayGeometry,
    band: BandParams,
    blockage: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Direct and absorption THz channel matrices, blockage-masked.

    poses is indexed [bs][user]; returns arrays of shape (B, K, M).
    """
    h, h_abs, _ = build_thz_channels_with_responses(poses, geom, band, blockage)
    return h, h_abs


def build_thz_channels_with_responses(
    poses: list[list[UserPose]],
    geom: ArrayGeometry,
    band: BandParams,
    blockage: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """As build_thz_channels, also returning the unmasked effective responses."""
    n_bs = len(poses)
    n_users = len(poses[0]) if n_bs else 0
    if blockage.shape != (n_bs, n_users):
        raise ValueError("blockage shape does not match poses grid")
    h = np.zeros((n_bs, n_users, geom.num_elements), dtype=complex)
    h_abs = np.zeros_like(h)
    responses = np.zeros_like(h)
    for b in range(n_bs):
        for k in range(n_users):
            pose = poses[b][k]
            resp = effective_array_response(pose, geom)
            responses[b, k] = resp
            if not blockage[b, k]:
                continue
            h[b, k] = thz_pathloss(pose.distance, band) * resp
            h_abs[b, k] = thz_absorption_pathloss(pose.distance, band) * resp
    return h, h_abs, responses


def build_umb_channel(
    pose: UserPose, geom: ArrayGeometry, band: BandParams, rng: np.random.Generator
) -> np.ndarray:
    """One Rician UMB channel vector: LoS effective response plus CN(0,1) scatter."""
    kappa = band.rician_k
    los = effective_array_response(pose, geom)
    nlos = (rng.standard_normal(geom.num_elements) + 1j * rng.standard_normal(geom.num_elements)) / np.sqrt(2.0)
    mix = np.sqrt(kappa / (1.0 + kappa)) * los + np.sqrt(1.0 / (1.0 + kappa)) * nlos
    return umb_pathloss(pose.distance, band) * mix


def build_umb_channels(
    poses: list[list[UserPose]],
    geom: ArrayGeometry,
    band: BandParams,
    rng: np.random.Generator,
) -> np.ndarray:
    n_bs = len(poses)
    n_users = len(poses[0]) if n_bs else 0
    g = np.zeros((n_bs, n_users, geom.num_elements), dtype=complex)
    for r in range(n_bs):
        for k in range(n_users):
            g[r, k] = build_umb_channel(poses[r][k], geom, band, rng)
    return g


def molecular_noise_variance(h_abs: np.ndarray, combined_beams: np.ndarray) -> np.ndarray:
    """Re-radiation noise variance per user.

    h_abs: absorption channels (B, K, M); combined_beams: antenna-domain beams
    F_b w_{b,i} with shape (B, M, K).  Returns sigma_tilde^2 of shape (K,):
    sum_i |sum_b h_abs[b,k]^H beams[b,:,i]|^2.
    """
    if h_abs.shape[0] != combined_beams.shape[0] or h_abs.shape[2] != combined_beams.shape[1]:
        raise ValueError("absorption channels and beams are dimensionally inconsistent")
    # cross[b, k, i] = h_abs[b, k]^H beams[b, :, i]
    cross = np.einsum("bkm,bmi->ki", h_abs.conj(), combined_beams, optimize=True)
    return np.sum(np.abs(cross) ** 2, axis=1)


def perturb_csi(channel: np.ndarray, uncertainty: float, rng: np.random.Generator) -> np.ndarray:
    """Add a circularly-symmetric error with per-vector energy uncertainty * ||h||^2.

    The last axis is the antenna dimension; leading axes index links.  Errors
    are independent across links.  Returns the perturbed copy.
    """
    if not 0.0 <= uncertainty < 1.0:
        raise ValueError(f"uncertainty must lie in [0, 1), got {uncertainty}")
    if uncertainty == 0.0:
        return channel.copy()
    m = channel.shape[-1]
    norms = np.linalg.norm(channel, axis=-1, keepdims=True)
    scale = np.sqrt(uncertainty / m) * norms
    noise = (rng.standard_normal(channel.shape) + 1j * rng.standard_normal(channel.shape)) / np.sqrt(2.0)
    return channel + scale * noise


def perturb_realization(
    channels: ChannelRealization, uncertainty: float, rng: np.random.Generator
) -> ChannelRealization:
    """Perturb every stored channel vector independently; blockage is kept."""
    return ChannelRealization(
        thz_direct=perturb_csi(channels.thz_direct, uncertainty, rng),
        thz_absorption=perturb_csi(channels.thz_absorption, uncertainty, rng),
        umb=perturb_csi(channels.umb, uncertainty, rng),
        blockage=channels.blockage.copy(),
        thz_response=None if channels.thz_response is None else channels.thz_response.copy(),
    )


def load_absorption_table(path: str) -> np.ndarray:
    """Two-column text table (frequency_hz, coeff_per_m), sorted by frequency."""
    table = np.loadtxt(path, ndmin=2)
    if table.shape[1] != 2:
        raise ValueError("absorption table must have two columns: frequency_hz coeff_per_m")
    order = np.argsort(table[:, 0])
    return table[order]


def absorption_coeff_at(table: np.ndarray, frequency_hz: float) -> float:
    """Linear interpolation of the absorption coefficient at a carrier frequency."""
    return float(np.interp(frequency_hz, table[:, 0], table[:, 1]))
