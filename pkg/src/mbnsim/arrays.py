"""Near-field geometry for uniform linear arrays.

Spherical-wavefront modeling: every array element sees its own range to the
user and its own projection of the user's velocity, so both the phase front
and the Doppler shift vary across the aperture.  All responses here are
phase-only (unit-modulus entries); amplitude lives in the path-loss model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform linear array: element count, spacing and carrier wavelength (m)."""

    num_elements: int
    spacing: float
    wavelength: float

    def __post_init__(self) -> None:
        if self.num_elements < 1:
            raise ValueError(f"num_elements must be >= 1, got {self.num_elements}")
        if self.spacing <= 0.0:
            raise ValueError(f"spacing must be positive, got {self.spacing}")
        if self.wavelength <= 0.0:
            raise ValueError(f"wavelength must be positive, got {self.wavelength}")

    @property
    def aperture(self) -> float:
        return self.num_elements * self.spacing


@dataclass(frozen=True)
class UserPose:
    """User as seen from the first array element.

    distance: range to element 0 (m); angle: off the array axis (rad), with 0
    meaning the user lies ahead of the array along its own axis; speed: along
    the array axis (m/s); step_duration: time between trajectory points (s).
    """

    distance: float
    angle: float
    speed: float = 0.0
    step_duration: float = 0.1

    def __post_init__(self) -> None:
        if self.distance <= 0.0:
            raise ValueError(f"distance must be positive, got {self.distance}")
        if not 0.0 <= self.angle <= np.pi:
            raise ValueError(f"angle must lie in [0, pi], got {self.angle}")
        if self.speed < 0.0:
            raise ValueError(f"speed must be non-negative, got {self.speed}")
        if self.step_duration <= 0.0:
            raise ValueError(f"step_duration must be positive, got {self.step_duration}")


def _check_element_index(geom: ArrayGeometry, m: int) -> None:
    if not isinstance(m, (int, np.integer)):
        raise TypeError(f"element index must be an integer, got {type(m).__name__}")
    if m < 0 or m >= geom.num_elements:
        raise ValueError(f"element index {m} outside [0, {geom.num_elements - 1}]")


def element_distances(pose: UserPose, geom: ArrayGeometry) -> np.ndarray:
    """Exact per-element ranges sqrt(d^2 + m^2 x^2 - 2 d m x cos(angle)), m = 0..M-1."""
    m = np.arange(geom.num_elements, dtype=float)
    sq = (
        pose.distance**2
        + (m * geom.spacing) ** 2
        - 2.0 * pose.distance * m * geom.spacing * np.cos(pose.angle)
    )
    dist = np.sqrt(np.maximum(sq, 0.0))
    if np.any(dist == 0.0):
        raise ValueError("user coincides with an array element (zero range)")
    return dist


def element_distance(pose: UserPose, geom: ArrayGeometry, m: int) -> float:
    """Range from element m to the user."""
    _check_element_index(geom, m)
    return float(element_distances(pose, geom)[m])


def array_response(pose: UserPose, geom: ArrayGeometry) -> np.ndarray:
    """Phase response exp(-j 2 pi d_m / lambda) per element; unit modulus."""
    return np.exp(-1j * TWO_PI / geom.wavelength * element_distances(pose, geom))


def radial_velocities(pose: UserPose, geom: ArrayGeometry) -> np.ndarray:
    """Projection of the user's axial velocity onto each element's line of sight."""
    m = np.arange(geom.num_elements, dtype=float)
    dist = element_distances(pose, geom)
    return (pose.distance * np.cos(pose.angle) - m * geom.spacing) / dist * pose.speed


def radial_velocity(pose: UserPose, geom: ArrayGeometry, m: int) -> float:
    _check_element_index(geom, m)
    return float(radial_velocities(pose, geom)[m])


def doppler_response(pose: UserPose, geom: ArrayGeometry) -> np.ndarray:
    """Per-element Doppler phase exp(-j 2 pi v_m tau / lambda) over one step."""
    v = radial_velocities(pose, geom)
    return np.exp(-1j * TWO_PI / geom.wavelength * v * pose.step_duration)


def effective_array_response(pose: UserPose, geom: ArrayGeometry) -> np.ndarray:
    """Velocity-aware response: Hadamard product of array and Doppler responses."""
    return array_response(pose, geom) * doppler_response(pose, geom)
