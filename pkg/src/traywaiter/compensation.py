"""Tilt compensation: optimal tray orientation from linear accelerations.

Rotating the tray so that its normal stays aligned with the combined
gravity-plus-inertia vector removes the tangential force on anything resting
on it, for any friction coefficient. The rotation is applied about a
configurable center of rotation (CoR) and mapped back to the robot flange
through a constant mounting transform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "FreeFallError",
    "TiltPose",
    "MountingTransform",
    "tilt_angles",
    "rotation_matrix",
    "tilt_pose",
    "planar_tilt",
    "baseline_friction_tilt",
    "compose_flange_pose",
    "pendulum_length_from_frequency",
    "wrap_angle",
]


class FreeFallError(ValueError):
    """Raised when g + az <= 0: the load is in free fall and no tray
    orientation can keep it pressed against the surface."""


def wrap_angle(phi: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    out = math.remainder(phi, 2.0 * math.pi)
    if out <= -math.pi:
        out += 2.0 * math.pi
    return out


def tilt_angles(accel, g: float) -> tuple[float, float]:
    """Compensation angles (beta, phi) for a filtered acceleration sample.

    beta = -atan(sqrt(ax^2 + ay^2) / (g + az)), phi = pi + atan2(ay, ax),
    with phi wrapped to (-pi, pi]. With zero lateral acceleration beta is 0
    and phi is reported as pi by convention (it is not meaningful there; the
    conjugation in rotation_matrix makes the attitude the identity anyway).
    """
    ax, ay, az = (float(v) for v in accel)
    gz = g + az
    if gz <= 0.0:
        raise FreeFallError(f"g + az = {gz} <= 0: tilt compensation undefined")
    rho = math.hypot(ax, ay)
    beta = -math.atan2(rho, gz) + 0.0
    phi = wrap_angle(math.pi + math.atan2(ay, ax))
    return beta, phi


def _rot_z(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _rot_y(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rotation_matrix(beta: float, phi: float) -> np.ndarray:
    """Tray attitude Rot_z(phi) @ Rot_y(beta) @ Rot_z(-phi)."""
    return _rot_z(phi) @ _rot_y(beta) @ _rot_z(-phi)


@dataclass(frozen=True)
class TiltPose:
    """Compensation angles plus the resulting attitude and CoR transform."""

    beta: float
    phi: float
    rotation: np.ndarray
    transform: np.ndarray  # 4x4, world -> CoR frame


def tilt_pose(accel, position, g: float) -> TiltPose:
    """Full compensated pose of the CoR frame for one trajectory sample."""
    beta, phi = tilt_angles(accel, g)
    R = rotation_matrix(beta, phi)
    T = np.eye(4)
    T[:3, :3] = R
    T[:3, 3] = np.asarray(position, dtype=float)
    return TiltPose(beta, phi, R, T)


def planar_tilt(ax: float, az: float, g: float) -> float:
    """Planar compensation angle beta* = -atan(ax / (g + az))."""
    gz = g + az
    if gz <= 0.0:
        raise FreeFallError(f"g + az = {gz} <= 0: tilt compensation undefined")
    return -math.atan2(ax, gz) + 0.0


def baseline_friction_tilt(a_y: float, mu: float, g: float) -> float:
    """Friction-dependent tilt angle used by prior tray-balancing work,
    provided for comparison only: atan((mu g - a_y) / (g + mu a_y)).

    Unlike planar_tilt it keeps a residual angle atan(mu) at rest.
    """
    den = g + mu * a_y
    if den <= 0.0:
        raise ValueError(f"g + mu*a_y = {den} <= 0: baseline angle undefined")
    return math.atan((mu * g - a_y) / den)


def _check_rotation(R: np.ndarray, tol: float = 1e-9) -> None:
    if np.abs(R @ R.T - np.eye(3)).max() > tol or abs(np.linalg.det(R) - 1.0) > tol:
        raise ValueError("rotation block is not orthonormal with det +1")


@dataclass(frozen=True)
class MountingTransform:
    """Constant flange -> CoR transform for one object/container."""

    matrix: np.ndarray = field(default_factory=lambda: np.eye(4))

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (4, 4):
            raise ValueError(f"mounting transform must be 4x4, got {m.shape}")
        if not np.allclose(m[3], [0.0, 0.0, 0.0, 1.0], atol=1e-12):
            raise ValueError("last row of a homogeneous transform must be [0 0 0 1]")
        _check_rotation(m[:3, :3])
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_parts(cls, rotation, translation) -> "MountingTransform":
        m = np.eye(4)
        m[:3, :3] = np.asarray(rotation, dtype=float)
        m[:3, 3] = np.asarray(translation, dtype=float)
        return cls(m)

    def inverse(self) -> np.ndarray:
        R = self.matrix[:3, :3]
        p = self.matrix[:3, 3]
        out = np.eye(4)
        out[:3, :3] = R.T
        out[:3, 3] = -R.T @ p
        return out


def compose_flange_pose(position, rotation: np.ndarray,
                        mount: MountingTransform) -> np.ndarray:
    """Flange pose T_0_F = T_0_CoR @ inv(T_F_CoR).

    The CoR point itself follows `position` exactly; the flange is offset by
    the constant mounting transform.
    """
    T = np.eye(4)
    T[:3, :3] = rotation
    T[:3, 3] = np.asarray(position, dtype=float)
    return T @ mount.inverse()


def pendulum_length_from_frequency(omega_n: float, g: float) -> float:
    """Equivalent pendulum length l = g / omega_n^2 of the first slosh mode."""
    if not (omega_n > 0.0 and math.isfinite(omega_n)):
        raise ValueError(f"omega_n must be positive, got {omega_n}")
    return g / (omega_n * omega_n)
