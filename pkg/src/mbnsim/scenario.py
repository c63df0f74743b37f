"""Scenario description, config parsing, corridor topology and channel synthesis.

The default parameter set is the large-scale evaluation setup: a 350 m
corridor with BSs alternating sides at a 30 m lateral offset, a 0.4 THz band
with 0.8 GHz of bandwidth next to an 8 GHz band with 100 MHz, 25/40 dBm
budgets, cluster size 2 per band, users moving at 40 m/s re-optimized every
100 ms.  Tests and desk experiments override sizes downward.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .arrays import ArrayGeometry, UserPose
from .channel import (
    BandParams,
    ChannelRealization,
    absorption_coeff_at,
    build_thz_channels_with_responses,
    build_umb_channels,
    load_absorption_table,
    perturb_realization,
    sample_blockage_matrix,
)
from .metrics import HOCostParams


class ConfigError(ValueError):
    """Invalid scenario configuration; carries one message per problem."""

    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


@dataclass
class Scenario:
    """Flat, file-mappable network description."""

    corridor_length: float = 350.0
    corridor_width: float = 250.0
    bs_offset: float = 30.0
    num_tbs: int = 4
    num_ubs: int = 2
    num_users: int = 12
    m_thz: int = 504
    m_umb: int = 84
    thz_carrier_hz: float = 0.4e12
    thz_bandwidth_hz: float = 0.8e9
    thz_tx_gain_db: float = 15.0
    thz_rx_gain_db: float = 8.0
    absorption_coeff: float = 0.01
    absorption_table: str = ""
    umb_carrier_hz: float = 8e9
    umb_bandwidth_hz: float = 100e6
    umb_tx_gain_db: float = 10.0
    umb_rx_gain_db: float = 8.0
    pathloss_exponent: float = 2.5
    rician_k: float = 10.0
    noise_psd_dbm_hz: float = -174.0
    p_max_thz_dbm: float = 25.0
    p_max_umb_dbm: float = 40.0
    cluster_t: int = 2
    cluster_u: int = 2
    qos_gbps: float = 0.5
    blocker_density: float = 0.002
    hbf: str = "fc"
    spacing_mult: float = 0.5
    speed_mps: float = 40.0
    window_s: float = 0.1
    num_windows: int = 3
    eta_thz: float = 0.4
    eta_umb: float = 0.4
    min_retained: int = 1
    moop_weight: float = 1.0
    csi_uncertainty: float = 0.0
    blockage_per_point: bool = False
    seed: int = 0

    @property
    def thz(self) -> BandParams:
        coeff = self.absorption_coeff
        if self.absorption_table:
            table = load_absorption_table(self.absorption_table)
            coeff = absorption_coeff_at(table, self.thz_carrier_hz)
        return BandParams(
            carrier_hz=self.thz_carrier_hz,
            bandwidth_hz=self.thz_bandwidth_hz,
            tx_gain_db=self.thz_tx_gain_db,
            rx_gain_db=self.thz_rx_gain_db,
            absorption_coeff_per_m=coeff,
            noise_psd_w_per_hz=10.0 ** (self.noise_psd_dbm_hz / 10.0) * 1e-3,
        )

    @property
    def umb(self) -> BandParams:
        return BandParams(
            carrier_hz=self.umb_carrier_hz,
            bandwidth_hz=self.umb_bandwidth_hz,
            tx_gain_db=self.umb_tx_gain_db,
            rx_gain_db=self.umb_rx_gain_db,
            pathloss_exponent=self.pathloss_exponent,
            rician_k=self.rician_k,
            noise_psd_w_per_hz=10.0 ** (self.noise_psd_dbm_hz / 10.0) * 1e-3,
        )

    @property
    def ho(self) -> HOCostParams:
        return HOCostParams(
            eta_thz=self.eta_thz,
            eta_umb=self.eta_umb,
            min_retained=self.min_retained,
            moop_weight=self.moop_weight,
        )

    def geometry(self, band: str) -> ArrayGeometry:
        if band == "thz":
            lam = self.thz.wavelength
            return ArrayGeometry(self.m_thz, self.spacing_mult * lam, lam)
        lam = self.umb.wavelength
        return ArrayGeometry(self.m_umb, self.spacing_mult * lam, lam)

    def validate(self) -> list[str]:
        problems = []
        if self.corridor_length <= 0:
            problems.append("corridor_length must be positive")
        if self.num_users < 1:
            problems.append("num_users must be at least 1")
        if self.num_tbs < 0 or self.num_ubs < 0:
            problems.append("BS counts must be non-negative")
        if self.num_tbs == 0 and self.num_ubs == 0:
            problems.append("at least one BS is required")
        if self.num_tbs and not 1 <= self.cluster_t <= self.num_tbs:
            problems.append("cluster_t must lie in [1, num_tbs]")
        if self.num_ubs and not 1 <= self.cluster_u <= self.num_ubs:
            problems.append("cluster_u must lie in [1, num_ubs]")
        if self.hbf not in ("fc", "pc"):
            problems.append("hbf must be 'fc' or 'pc'")
        if self.hbf == "pc":
            if self.num_tbs and self.m_thz % self.num_users:
                problems.append("partially-connected arrays need num_users to divide m_thz")
            if self.num_ubs and self.m_umb % self.num_users:
                problems.append("partially-connected arrays need num_users to divide m_umb")
        if self.qos_gbps < 0:
            problems.append("qos_gbps must be non-negative")
        if self.blocker_density < 0:
            problems.append("blocker_density must be non-negative")
        if not 0 <= self.csi_uncertainty < 1:
            problems.append("csi_uncertainty must lie in [0, 1)")
        if self.num_windows < 1:
            problems.append("num_windows must be at least 1")
        if self.window_s <= 0:
            problems.append("window_s must be positive")
        if not 0 < self.eta_thz < 1 or not 0 < self.eta_umb < 1:
            problems.append("handover cost fractions must lie in (0, 1)")
        if self.moop_weight < 0:
            problems.append("moop_weight must be non-negative")
        if self.min_retained < 0:
            problems.append("min_retained must be non-negative")
        return problems


_FIELDS = {f.name: f for f in dataclasses.fields(Scenario)}


def _coerce(name: str, raw: str):
    kind = _FIELDS[name].type
    try:
        if kind == "bool":
            low = raw.strip().lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError("expected a boolean")
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        return raw
    except ValueError as exc:
        raise ValueError(f"{name}: {exc}") from exc


def parse_config(text: str) -> dict:
    """Parse `key = value` lines; '#' starts a comment, blanks are skipped."""
    problems: list[str] = []
    mapping: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            problems.append(f"line {lineno}: expected 'key = value'")
            continue
        key, raw = (part.strip() for part in body.split("=", 1))
        if key not in _FIELDS:
            problems.append(f"line {lineno}: unknown key {key!r}")
            continue
        try:
            mapping[key] = _coerce(key, raw)
        except ValueError as exc:
            problems.append(f"line {lineno}: {exc}")
    if problems:
        raise ConfigError(problems)
    return mapping


def scenario_from_config(text: str = "", overrides: dict | None = None) -> Scenario:
    mapping = parse_config(text)
    for key, raw in (overrides or {}).items():
        if key not in _FIELDS:
            raise ConfigError([f"unknown key {key!r}"])
        mapping[key] = _coerce(key, raw) if isinstance(raw, str) else raw
    scn = Scenario(**mapping)
    problems = scn.validate()
    if problems:
        raise ConfigError(problems)
    return scn


def config_dump(scn: Scenario) -> dict:
    return dataclasses.asdict(scn)


@dataclass
class Topology:
    tbs_xy: np.ndarray  # (B_T, 2)
    ubs_xy: np.ndarray  # (B_U, 2)
    user_x: np.ndarray  # (K,)


def generate_topology(scn: Scenario, rng: np.random.Generator) -> Topology:
    """Grid BS placement with alternating sides; users uniform on the center line.

    BS class i sits at x = (i + 1/2) L / B on y = +/- bs_offset, sides
    alternating per index (UBS phase flipped so the two classes interleave).
    """
    def grid(count: int, flip: bool) -> np.ndarray:
        xy = np.zeros((count, 2))
        for i in range(count):
            xy[i, 0] = (i + 0.5) * scn.corridor_length / count
            side = 1 if (i + flip) % 2 == 0 else -1
            xy[i, 1] = side * scn.bs_offset
        return xy

    return Topology(
        tbs_xy=grid(scn.num_tbs, False),
        ubs_xy=grid(scn.num_ubs, True),
        user_x=rng.uniform(0.0, scn.corridor_length, size=scn.num_users),
    )


def step_trajectory(user_x: np.ndarray, speed: float, window: float, corridor_length: float) -> np.ndarray:
    """Advance users along the corridor axis, wrapping at the end."""
    if speed < 0:
        raise ValueError("speed must be non-negative")
    return np.mod(user_x + speed * window, corridor_length)


def poses_for(
    scn: Scenario, bs_xy: np.ndarray, user_x: np.ndarray
) -> list[list[UserPose]]:
    """Per-(BS, user) poses: range and angle off the array axis (+x)."""
    out: list[list[UserPose]] = []
    for b in range(bs_xy.shape[0]):
        row = []
        for k in range(user_x.shape[0]):
            dx = user_x[k] - bs_xy[b, 0]
            d = float(np.hypot(dx, bs_xy[b, 1]))
            angle = float(np.arccos(np.clip(dx / d, -1.0, 1.0)))
            row.append(
                UserPose(distance=d, angle=angle, speed=scn.speed_mps, step_duration=scn.window_s)
            )
        out.append(row)
    return out


def thz_distances(topo: Topology, user_x: np.ndarray) -> np.ndarray:
    dx = user_x[None, :] - topo.tbs_xy[:, 0][:, None]
    return np.hypot(dx, topo.tbs_xy[:, 1][:, None])


def synthesize_channels(
    scn: Scenario,
    topo: Topology,
    user_x: np.ndarray,
    rng: np.random.Generator,
    blockage: np.ndarray | None = None,
) -> tuple[ChannelRealization, ChannelRealization]:
    """One channel realization: (estimate seen by the solver, ideal for rates).

    With zero CSI uncertainty the two are the same object's copies.  Blockage
    may be passed in to hold it fixed across trajectory points.
    """
    thz_band, umb_band = scn.thz, scn.umb
    if scn.num_tbs:
        if blockage is None:
            blockage = sample_blockage_matrix(thz_distances(topo, user_x), scn.blocker_density, rng)
        poses = poses_for(scn, topo.tbs_xy, user_x)
        h, h_abs, resp = build_thz_channels_with_responses(
            poses, scn.geometry("thz"), thz_band, blockage
        )
    else:
        blockage = np.zeros((0, scn.num_users), dtype=np.int8)
        h = h_abs = resp = np.zeros((0, scn.num_users, scn.m_thz), dtype=complex)
    if scn.num_ubs:
        poses = poses_for(scn, topo.ubs_xy, user_x)
        g = build_umb_channels(poses, scn.geometry("umb"), umb_band, rng)
    else:
        g = np.zeros((0, scn.num_users, scn.m_umb), dtype=complex)
    estimate = ChannelRealization(
        thz_direct=h, thz_absorption=h_abs, umb=g, blockage=blockage, thz_response=resp
    )
    if scn.csi_uncertainty > 0.0:
        ideal = perturb_realization(estimate, scn.csi_uncertainty, rng)
    else:
        ideal = estimate
    return estimate, ideal
