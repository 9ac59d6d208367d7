"""Spatial algebra: rotations, rigid transforms, twists and wrenches.

Conventions used throughout the package:

- 6-vectors are ordered (torque/angular; force/linear), so the gravitational
  wrench of a mass m hanging along -z is ``[0, 0, 0, 0, 0, -m*g]``.
- ``Pose`` stores the rotation/translation mapping local coordinates into the
  parent frame: ``p_parent = R @ p_local + t``.
- Quaternions appear only at file boundaries, ordered (w, x, y, z), and are
  normalized on ingest.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

_ORTHO_TOL = 1e-9


def skew(v: np.ndarray) -> np.ndarray:
    """3x3 matrix S(v) with S(v) @ u == cross(v, u)."""
    v = np.asarray(v, dtype=float)
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


def rotation_x(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0, 0], [0, c, -s], [0, s, c]])


def rotation_y(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0, s], [0, 1.0, 0], [-s, 0, c]])


def rotation_z(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1.0]])


def axis_angle_rotation(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues formula for a unit axis."""
    axis = np.asarray(axis, dtype=float)
    K = skew(axis)
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)


def check_rotation(R: np.ndarray) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3):
        raise ValueError(f"rotation must be 3x3, got {R.shape}")
    if np.max(np.abs(R @ R.T - np.eye(3))) > _ORTHO_TOL:
        raise ValueError("rotation matrix is not orthonormal")
    if abs(np.linalg.det(R) - 1.0) > _ORTHO_TOL:
        raise ValueError("rotation matrix determinant is not +1")
    return R


def rotation_log(R: np.ndarray) -> np.ndarray:
    """Axis*angle vector of a rotation matrix (inverse of Rodrigues)."""
    # scalar arithmetic: this sits on the per-cycle hot path
    cos_angle = (R[0, 0] + R[1, 1] + R[2, 2] - 1.0) * 0.5
    cos_angle = min(1.0, max(-1.0, cos_angle))
    angle = math.acos(cos_angle)
    w0 = R[2, 1] - R[1, 2]
    w1 = R[0, 2] - R[2, 0]
    w2 = R[1, 0] - R[0, 1]
    if angle < 1e-10:
        # First-order: R ~ I + S(w)
        return np.array([0.5 * w0, 0.5 * w1, 0.5 * w2])
    if np.pi - angle < 1e-6:
        # Near pi the off-diagonal extraction degenerates; use the symmetric part.
        A = (R + np.eye(3)) / 2.0
        axis = np.sqrt(np.maximum(np.diag(A), 0.0))
        # Fix signs from the largest component
        k = int(np.argmax(axis))
        if axis[k] > 0:
            axis = A[:, k] / axis[k]
            axis = axis / np.linalg.norm(axis)
        return axis * angle
    s = angle / (2.0 * math.sin(angle))
    return np.array([w0 * s, w1 * s, w2 * s])


def quaternion_to_rotation(q: np.ndarray) -> np.ndarray:
    """(w, x, y, z) quaternion to rotation matrix; normalizes the input."""
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if n < 1e-12:
        raise ValueError("zero-norm quaternion")
    w, x, y, z = q / n
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def rotation_to_quaternion(R: np.ndarray) -> np.ndarray:
    """Rotation matrix to (w, x, y, z) quaternion with w >= 0."""
    t = np.trace(R)
    if t > 0:
        s = np.sqrt(t + 1.0) * 2.0
        q = np.array([0.25 * s, (R[2, 1] - R[1, 2]) / s,
                      (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s])
    else:
        i = int(np.argmax(np.diag(R)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = np.sqrt(max(R[i, i] - R[j, j] - R[k, k] + 1.0, 0.0)) * 2.0
        q = np.empty(4)
        q[0] = (R[k, j] - R[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (R[j, i] + R[i, j]) / s
        q[1 + k] = (R[k, i] + R[i, k]) / s
    if q[0] < 0:
        q = -q
    return q / np.linalg.norm(q)


@dataclass(frozen=True)
class Pose:
    """Rigid transform: p_parent = rotation @ p_local + translation."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=float))
        object.__setattr__(self, "translation",
                           np.asarray(self.translation, dtype=float).reshape(3))

    @staticmethod
    def identity() -> "Pose":
        return Pose()

    @staticmethod
    def from_quat_trans(quat, trans) -> "Pose":
        return Pose(quaternion_to_rotation(quat), np.asarray(trans, dtype=float))

    def compose(self, other: "Pose") -> "Pose":
        return Pose(self.rotation @ other.rotation,
                    self.rotation @ other.translation + self.translation)

    def inverse(self) -> "Pose":
        RT = self.rotation.T
        return Pose(RT, -RT @ self.translation)

    def apply(self, point: np.ndarray) -> np.ndarray:
        return self.rotation @ np.asarray(point, dtype=float) + self.translation

    def __matmul__(self, other: "Pose") -> "Pose":
        return self.compose(other)


@dataclass(frozen=True)
class Twist:
    """Spatial velocity, (angular; linear)."""

    angular: np.ndarray = field(default_factory=lambda: np.zeros(3))
    linear: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([np.asarray(self.angular, dtype=float),
                               np.asarray(self.linear, dtype=float)])

    @staticmethod
    def from_vector(v: np.ndarray) -> "Twist":
        v = np.asarray(v, dtype=float).reshape(6)
        return Twist(v[:3].copy(), v[3:].copy())


@dataclass(frozen=True)
class Wrench:
    """Generalized force, (torque; force)."""

    torque: np.ndarray = field(default_factory=lambda: np.zeros(3))
    force: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([np.asarray(self.torque, dtype=float),
                               np.asarray(self.force, dtype=float)])

    @staticmethod
    def from_vector(v: np.ndarray) -> "Wrench":
        v = np.asarray(v, dtype=float).reshape(6)
        return Wrench(v[:3].copy(), v[3:].copy())


def wrench_transform(pose: Pose) -> np.ndarray:
    """6x6 map re-expressing a wrench from the pose's local frame to its parent.

    With w = (tau; f) expressed in the local frame, the parent-frame wrench is
    tau' = R tau + t x (R f), f' = R f.
    """
    R = pose.rotation
    X = np.zeros((6, 6))
    X[:3, :3] = R
    X[:3, 3:] = skew(pose.translation) @ R
    X[3:, 3:] = R
    return X


def motion_transform(pose: Pose) -> np.ndarray:
    """6x6 map re-expressing a twist from the pose's local frame to its parent."""
    R = pose.rotation
    X = np.zeros((6, 6))
    X[:3, :3] = R
    X[3:, :3] = skew(pose.translation) @ R
    X[3:, 3:] = R
    return X


def gravity_only_wrench_transform(pose: Pose) -> np.ndarray:
    """Simplified wrench transform for a zero-torque wrench acting at the
    destination-frame origin: only the force block rotates, torque stays zero.
    """
    X = np.zeros((6, 6))
    X[3:, 3:] = pose.rotation
    return X


def pose_error(actual: Pose, desired: Pose) -> np.ndarray:
    """6-vector (orientation log; translation) of desired relative to actual,
    expressed in the common parent frame. Zero iff the poses coincide.
    """
    e = np.empty(6)
    e[:3] = rotation_log(desired.rotation @ actual.rotation.T)
    e[3:] = desired.translation - actual.translation
    return e
