"""Unit-quaternion rotations and the swing-twist decomposition.

Conventions
-----------
- Quaternions are (w, x, y, z), always unit-norm, canonicalized to w >= 0
  (the double cover is collapsed at construction time).
- ``a @ b`` applies ``b`` first, then ``a`` (active rotations on column
  vectors).
- Euler angles are intrinsic XYZ, radians. The conversion is bijective away
  from gimbal lock (|pitch| = pi/2), where a ``GimbalLockWarning`` is issued.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import PreconditionError

_UNIT_TOL = 1e-9


class GimbalLockWarning(UserWarning):
    """Euler extraction hit the degenerate |pitch| = pi/2 configuration."""


@dataclass(frozen=True)
class Rotation:
    """A 3D rotation stored as a canonical unit quaternion."""

    quat: np.ndarray  # (4,) float64, (w, x, y, z), w >= 0

    def __post_init__(self):
        q = np.asarray(self.quat, dtype=np.float64).reshape(4)
        norm = float(np.linalg.norm(q))
        if not np.isfinite(norm) or abs(norm - 1.0) > 1e-6:
            raise PreconditionError(f"quaternion norm {norm} too far from 1")
        q = q / norm
        if q[0] < 0.0:
            q = -q
        object.__setattr__(self, "quat", q)

    @staticmethod
    def identity() -> "Rotation":
        return Rotation(np.array([1.0, 0.0, 0.0, 0.0]))

    @staticmethod
    def from_axis_angle(axis: np.ndarray, angle: float) -> "Rotation":
        axis = np.asarray(axis, dtype=np.float64).reshape(3)
        n = float(np.linalg.norm(axis))
        if n < 1e-12:
            if abs(angle) < 1e-12:
                return Rotation.identity()
            raise PreconditionError("zero axis with nonzero angle")
        half = 0.5 * float(angle)
        return Rotation(np.concatenate(([np.cos(half)], np.sin(half) * axis / n)))

    @staticmethod
    def from_rotvec(vec: np.ndarray) -> "Rotation":
        vec = np.asarray(vec, dtype=np.float64).reshape(3)
        angle = float(np.linalg.norm(vec))
        if angle < 1e-12:
            # Second-order small-angle expansion keeps round-trips exact.
            q = np.concatenate(([1.0 - angle * angle / 8.0], 0.5 * vec))
            return Rotation(q / np.linalg.norm(q))
        return Rotation.from_axis_angle(vec / angle, angle)

    @staticmethod
    def from_euler_xyz(angles: np.ndarray) -> "Rotation":
        """Intrinsic XYZ: rotate about x, then the new y, then the new z."""
        ax, ay, az = np.asarray(angles, dtype=np.float64).reshape(3)
        return (
            Rotation.from_axis_angle([1.0, 0.0, 0.0], ax)
            @ Rotation.from_axis_angle([0.0, 1.0, 0.0], ay)
            @ Rotation.from_axis_angle([0.0, 0.0, 1.0], az)
        )

    def to_euler_xyz(self) -> np.ndarray:
        """Inverse of :meth:`from_euler_xyz`; warns at gimbal lock."""
        m = self.to_matrix()
        sy = float(np.clip(m[0, 2], -1.0, 1.0))
        pitch = np.arcsin(sy)
        if abs(sy) > 1.0 - 1e-9:
            warnings.warn(
                "euler extraction at gimbal lock; roll/yaw split is arbitrary",
                GimbalLockWarning,
                stacklevel=2,
            )
            # Convention: put all remaining rotation into roll.
            roll = np.arctan2(m[2, 1], m[1, 1])
            return np.array([roll, pitch, 0.0])
        roll = np.arctan2(-m[1, 2], m[2, 2])
        yaw = np.arctan2(-m[0, 1], m[0, 0])
        return np.array([roll, pitch, yaw])

    def to_matrix(self) -> np.ndarray:
        w, x, y, z = self.quat
        return np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ]
        )

    def to_axis_angle(self) -> tuple[np.ndarray, float]:
        w = float(np.clip(self.quat[0], -1.0, 1.0))
        angle = 2.0 * np.arccos(w)
        v = self.quat[1:]
        n = float(np.linalg.norm(v))
        if n < 1e-12:
            return np.array([1.0, 0.0, 0.0]), 0.0
        return v / n, angle

    def to_rotvec(self) -> np.ndarray:
        axis, angle = self.to_axis_angle()
        return axis * angle

    def __matmul__(self, other: "Rotation") -> "Rotation":
        w1, x1, y1, z1 = self.quat
        w2, x2, y2, z2 = other.quat
        return Rotation(
            np.array(
                [
                    w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
                    w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
                    w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
                    w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
                ]
            )
        )

    def inverse(self) -> "Rotation":
        return Rotation(self.quat * np.array([1.0, -1.0, -1.0, -1.0]))

    def apply(self, vec: np.ndarray) -> np.ndarray:
        """Rotate a 3-vector (or an (N, 3) stack of vectors)."""
        v = np.asarray(vec, dtype=np.float64)
        w, q = self.quat[0], self.quat[1:]
        t = 2.0 * np.cross(q, v)
        return v + w * t + np.cross(q, t)

    def angle(self) -> float:
        """Rotation magnitude in [0, pi]."""
        return 2.0 * float(np.arccos(np.clip(self.quat[0], -1.0, 1.0)))

    def angle_to(self, other: "Rotation") -> float:
        """Geodesic distance on SO(3), in radians."""
        return (self.inverse() @ other).angle()

    def quat_distance(self, other: "Rotation") -> float:
        """Euclidean distance between canonical quaternions."""
        return float(
            min(
                np.linalg.norm(self.quat - other.quat),
                np.linalg.norm(self.quat + other.quat),
            )
        )


def swing_twist(r: Rotation, twist_axis: np.ndarray) -> tuple[float, Rotation]:
    """Split ``r`` into a twist about ``twist_axis`` and an orthogonal swing.

    Returns ``(twist_angle, swing)`` with ``r == swing @ twist`` (twist applied
    first) and the swing axis perpendicular to ``twist_axis``. The twist angle
    is signed about the axis and lies in (-pi, pi].
    """
    axis = np.asarray(twist_axis, dtype=np.float64).reshape(3)
    if abs(float(np.linalg.norm(axis)) - 1.0) > _UNIT_TOL:
        raise PreconditionError("twist_axis must be unit-norm within 1e-9")
    w = float(r.quat[0])
    proj = float(np.dot(r.quat[1:], axis))
    norm = float(np.hypot(w, proj))
    if norm < 1e-12:
        # 180-degree swing exactly orthogonal to the axis: twist is identity.
        return 0.0, r
    twist_angle = 2.0 * float(np.arctan2(proj, w))
    if twist_angle > np.pi:
        twist_angle -= 2.0 * np.pi
    twist = Rotation(np.concatenate(([w], proj * axis)) / norm)
    swing = r @ twist.inverse()
    return twist_angle, swing
