"""Closed-form analog beamformers and their effective digital power budgets.

The analog stage is fixed once per solve: each column is phase-matched to one
user's channel, which maximizes that user's array gain among unit-modulus
vectors.  The partially-connected variant applies the per-RF-chain sub-array
mask.  With the analog stage fixed, the per-BS power constraint moves to the
digital domain with the reduced budget P/M (fully connected) or P*K/M
(partially connected).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FULLY_CONNECTED = "fully_connected"
PARTIALLY_CONNECTED = "partially_connected"


@dataclass
class AnalogBeamformer:
    matrix: np.ndarray  # (M, N) complex
    architecture: str
    degenerate_columns: tuple[int, ...] = ()


def _phase_matrix(responses: np.ndarray) -> tuple[np.ndarray, tuple[int, ...]]:
    """Unit-modulus matrix aligned with the phases of `responses` (M, K).

    All-zero columns (blocked users) fall back to zero phase and are flagged.
    """
    if responses.ndim != 2:
        raise ValueError("responses must be a matrix with one column per user")
    degenerate = tuple(
        int(k) for k in range(responses.shape[1]) if not np.any(np.abs(responses[:, k]) > 0)
    )
    out = np.exp(1j * np.angle(responses))
    out[:, list(degenerate)] = 1.0
    return out, degenerate


def analog_fc(responses: np.ndarray) -> AnalogBeamformer:
    """Fully-connected beamformer: column k = exp(j*angle(channel of user k))."""
    matrix, degenerate = _phase_matrix(responses)
    return AnalogBeamformer(matrix=matrix, architecture=FULLY_CONNECTED, degenerate_columns=degenerate)


def analog_pc(responses: np.ndarray) -> AnalogBeamformer:
    """Partially-connected beamformer: phase matching under the block-diagonal mask.

    Requires the user count to divide the element count; RF chain k drives the
    k-th sub-array of M/K contiguous elements.
    """
    m, k = responses.shape
    if k == 0 or m % k != 0:
        raise ValueError(f"user count {k} must divide element count {m}")
    matrix, degenerate = _phase_matrix(responses)
    mask = np.kron(np.eye(k), np.ones((m // k, 1)))
    return AnalogBeamformer(
        matrix=matrix * mask, architecture=PARTIALLY_CONNECTED, degenerate_columns=degenerate
    )


def effective_power_budget(p_max_w: float, num_elements: int, num_users: int, architecture: str) -> float:
    """Digital-domain power budget implied by the fixed analog stage."""
    if p_max_w <= 0.0:
        raise ValueError("p_max_w must be positive")
    if architecture == FULLY_CONNECTED:
        return p_max_w / num_elements
    if architecture == PARTIALLY_CONNECTED:
        return p_max_w * num_users / num_elements
    raise ValueError(f"unknown architecture {architecture!r}")


def gram_scale(architecture: str, num_elements: int, num_users: int) -> float:
    """Nominal F^H F diagonal: M for fully connected, M/K for partially connected."""
    if architecture == FULLY_CONNECTED:
        return float(num_elements)
    if architecture == PARTIALLY_CONNECTED:
        return num_elements / num_users
    raise ValueError(f"unknown architecture {architecture!r}")


def orthogonality_slack(analog: AnalogBeamformer) -> float:
    """Spectral deviation of F^H F from its nominal scaled identity.

    Zero for partially-connected; for fully-connected it bounds the realized
    power overshoot: tr(F^H F W W^H) <= M * (1 + slack) * ||W||_F^2.
    """
    f = analog.matrix
    m, n = f.shape
    scale = gram_scale(analog.architecture, m, n)
    gram = f.conj().T @ f
    return float(np.linalg.norm(gram / scale - np.eye(n), ord=2))


def realized_power(analog: AnalogBeamformer, digital: np.ndarray) -> float:
    """Actual transmit power tr(F^H F W W^H) of one BS."""
    fw = analog.matrix @ digital
    return float(np.sum(np.abs(fw) ** 2))
