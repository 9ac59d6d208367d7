"""End-effector force modulation: external-wrench estimation on the held
object and an admittance law integrating force error into pose commands.

The admittance target pose composes with the operator command (as an offset
in the object frame) before retargeting, so physical interaction steers the
same pipeline as teleoperation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import retarget as rt
from . import robot as rb
from .spatial import Pose, axis_angle_rotation, pose_error


def _check_spd(M: np.ndarray, name: str, strict: bool) -> np.ndarray:
    M = np.asarray(M, dtype=float).reshape(6, 6)
    if np.max(np.abs(M - M.T)) > 1e-10:
        raise ValueError(f"{name} must be symmetric")
    eigs = np.linalg.eigvalsh(M)
    if strict and np.min(eigs) <= 0:
        raise ValueError(f"{name} must be positive definite")
    if not strict and np.min(eigs) < -1e-12:
        raise ValueError(f"{name} must be positive semidefinite")
    return M


@dataclass
class AdmittanceParams:
    """Virtual inertia / stiffness / damping of the admittance port.

    mode "external-input": the desired interaction wrench is supplied by the
    caller each cycle. mode "spring-damper": the desired wrench is the
    spring-damper law of desired_wrench() against a reference pose.
    """

    inertia: np.ndarray = field(
        default_factory=lambda: np.diag([2.0, 2.0, 2.0, 5.0, 5.0, 5.0]))
    stiffness: np.ndarray = field(
        default_factory=lambda: np.diag([10.0, 10.0, 10.0, 200.0, 200.0, 200.0]))
    damping: Optional[np.ndarray] = None  # None: critically damped
    mode: str = "external-input"
    # Fold viscous damping of the admittance twist into the external-input
    # update, so the state coasts to rest when the interaction stops. Off by
    # default: the bare law is a pure double integrator.
    fold_damping: bool = False

    def __post_init__(self):
        self.inertia = _check_spd(self.inertia, "inertia", strict=True)
        self.stiffness = _check_spd(self.stiffness, "stiffness", strict=False)
        if self.damping is None:
            # Critical damping per decoupled channel: d = 2 sqrt(k m).
            k = np.diag(self.stiffness)
            m = np.diag(self.inertia)
            self.damping = np.diag(2.0 * np.sqrt(k * m))
        self.damping = _check_spd(self.damping, "damping", strict=False)
        if self.mode not in ("external-input", "spring-damper"):
            raise ValueError(f"unknown admittance mode {self.mode!r}")
        self.inertia_inv = np.linalg.inv(self.inertia)


@dataclass
class AdmittanceState:
    """Integrated admittance target: a pose offset and its twist."""

    pose: Pose = field(default_factory=Pose.identity)
    twist: np.ndarray = field(default_factory=lambda: np.zeros(6))

    def copy(self) -> "AdmittanceState":
        return AdmittanceState(Pose(self.pose.rotation.copy(),
                                    self.pose.translation.copy()),
                               self.twist.copy())


def estimate_external_wrench(lambda_L_meas: np.ndarray,
                             lambda_R_meas: np.ndarray,
                             q: np.ndarray, dual: rb.DualArmModel,
                             obj: rb.ObjectModel,
                             rotations: Optional[tuple] = None) -> np.ndarray:
    """External wrench on the held object, expressed in the object frame.

    Superimposes the measured contact wrenches (contact frames) transformed
    to the object frame and subtracts the share needed to carry the object's
    weight; zero when the hands exactly support the object. Pass the two
    world hand rotations to skip the forward-kinematics evaluation.
    """
    return -rt.equilibrium_residual(dual, obj, q, lambda_L_meas, lambda_R_meas,
                                    rotations=rotations)


def desired_wrench(actual: Pose, twist: np.ndarray, desired: Pose,
                   params: AdmittanceParams) -> np.ndarray:
    """Spring-damper desired interaction wrench: K_d (X^d - X) - D_d V."""
    return params.stiffness @ pose_error(actual, desired) \
        - params.damping @ np.asarray(twist, dtype=float).reshape(6)


def integrate_pose(pose: Pose, twist: np.ndarray, dt: float) -> Pose:
    """Advance a pose by a world-frame twist (angular; linear) over dt."""
    twist = np.asarray(twist, dtype=float).reshape(6)
    w = twist[:3]
    angle = float(np.linalg.norm(w)) * dt
    if angle > 0.0:
        R = axis_angle_rotation(w / np.linalg.norm(w), angle) @ pose.rotation
    else:
        R = pose.rotation
    return Pose(R, pose.translation + twist[3:] * dt)


def admittance_step(state: AdmittanceState, lambda_ext: np.ndarray,
                    lambda_d: np.ndarray, params: AdmittanceParams,
                    dt: float, commanded: Pose, adapted: Pose) -> AdmittanceState:
    """One admittance integration cycle.

    acceleration = M^-1 (lambda_ext - lambda_d); the per-cycle twist change is
    saturated componentwise at the feasibility bound |commanded - adapted|/dt
    (sign preserved), then the pose is integrated from the clamped twist.

    In spring-damper mode lambda_d must come from desired_wrench() and enters
    with the stabilizing sign, so the state converges to the spring anchor
    under zero external wrench.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    lambda_ext = np.asarray(lambda_ext, dtype=float).reshape(6)
    lambda_d = np.asarray(lambda_d, dtype=float).reshape(6)
    if params.mode == "spring-damper":
        acc = params.inertia_inv @ (lambda_ext + lambda_d)
    else:
        acc = params.inertia_inv @ (lambda_ext - lambda_d)
        if params.fold_damping:
            acc = acc - params.inertia_inv @ (params.damping @ state.twist)
    # Feasibility bound on the per-cycle twist change (saturation, not floor):
    # the gap between commanded and adapted poses is the reachable headroom.
    dv_max = np.abs(pose_error(adapted, commanded)) / dt
    dv = np.sign(acc) * np.minimum(np.abs(acc) * dt, dv_max)
    twist = state.twist + dv
    return AdmittanceState(integrate_pose(state.pose, twist, dt), twist)
