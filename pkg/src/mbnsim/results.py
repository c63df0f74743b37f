"""Result containers shared by the solvers, baselines and the runner."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

STATUS_CONVERGED = "Converged"
STATUS_NOT_CONVERGED = "NotConverged"
STATUS_INFEASIBLE = "Infeasible"


@dataclass
class BeamformerSet:
    """Analog matrices and digital precoders for both bands.

    thz_analog: (B_T, M_T, N_T); thz_digital: (B_T, N_T, K); umb_* analogous.
    Digital entries are in physical (watt^0.5) units.
    """

    thz_analog: np.ndarray = field(default_factory=lambda: np.zeros((0, 0, 0), complex))
    thz_digital: np.ndarray = field(default_factory=lambda: np.zeros((0, 0, 0), complex))
    umb_analog: np.ndarray = field(default_factory=lambda: np.zeros((0, 0, 0), complex))
    umb_digital: np.ndarray = field(default_factory=lambda: np.zeros((0, 0, 0), complex))

    def combined_thz(self) -> np.ndarray:
        """Antenna-domain THz beams F_b @ W_b, shape (B_T, M_T, K)."""
        if not self.thz_analog.size:
            return np.zeros((0, 0, 0), complex)
        return np.einsum("bmn,bnk->bmk", self.thz_analog, self.thz_digital, optimize=True)

    def combined_umb(self) -> np.ndarray:
        if not self.umb_analog.size:
            return np.zeros((0, 0, 0), complex)
        return np.einsum("bmn,bnk->bmk", self.umb_analog, self.umb_digital, optimize=True)


@dataclass
class SolveResult:
    """Converged allocation for one trajectory point."""

    assoc: "object" = None  # AssociationState; typed loosely to avoid an import cycle
    beams: BeamformerSet | None = None
    rates_bps: np.ndarray = field(default_factory=lambda: np.zeros(0))
    rates_t_bps: np.ndarray = field(default_factory=lambda: np.zeros(0))
    rates_u_bps: np.ndarray = field(default_factory=lambda: np.zeros(0))
    sinr_t: np.ndarray = field(default_factory=lambda: np.zeros(0))
    sinr_u: np.ndarray = field(default_factory=lambda: np.zeros(0))
    sum_rate_bps: float = 0.0
    ho_counts_t: np.ndarray = field(default_factory=lambda: np.zeros(0, int))
    ho_counts_u: np.ndarray = field(default_factory=lambda: np.zeros(0, int))
    ho_sum_rate_bps: float = 0.0
    total_hos: int = 0
    objective_trace: list = field(default_factory=list)
    penalty_trace: list = field(default_factory=list)
    inner_statuses: list = field(default_factory=list)
    penalty_residual: float = 0.0
    status: str = STATUS_CONVERGED
    iterations: int = 0
    wall_time_s: float = 0.0
    meta: dict = field(default_factory=dict)
