"""Kinematics and dynamics of the dual 7-DoF-arm system.

All chain computations carry an optional leading batch dimension: the
retargeter's torque linearization finite-differences the quasi-static torque
along all 28 joint directions per control cycle, which is only affordable when
the per-configuration work is vectorized.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import yaml

from .spatial import (
    Pose,
    quaternion_to_rotation,
    rotation_to_quaternion,
    skew,
    wrench_transform,
)

GRAVITY = 9.81  # m/s^2, along -z of the world frame


class ModelError(Exception):
    """Raised when a model file fails parsing or invariant validation."""


@dataclass(frozen=True)
class JointDef:
    axis: np.ndarray                # unit vector, joint frame
    parent_offset: Pose             # fixed transform from parent joint frame
    q_min: float
    q_max: float
    dq_max: float
    tau_max: float
    link_mass: float
    link_com: np.ndarray            # m, joint frame
    link_inertia: np.ndarray        # 3x3 kg m^2 about the CoM, joint frame


@dataclass(frozen=True)
class ArmModel:
    joints: tuple
    base_pose: Pose
    end_effector_offset: Pose

    # Cached stacked parameter arrays for the batched kinematics.
    _axes: np.ndarray = field(init=False, repr=False, compare=False)
    _off_R: np.ndarray = field(init=False, repr=False, compare=False)
    _off_t: np.ndarray = field(init=False, repr=False, compare=False)
    _masses: np.ndarray = field(init=False, repr=False, compare=False)
    _coms: np.ndarray = field(init=False, repr=False, compare=False)
    _K: np.ndarray = field(init=False, repr=False, compare=False)
    _KK: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.joints) != 7:
            raise ModelError(f"arm must have exactly 7 joints, got {len(self.joints)}")
        object.__setattr__(self, "_axes", np.array([j.axis for j in self.joints]))
        object.__setattr__(self, "_off_R", np.array([j.parent_offset.rotation for j in self.joints]))
        object.__setattr__(self, "_off_t", np.array([j.parent_offset.translation for j in self.joints]))
        object.__setattr__(self, "_masses", np.array([j.link_mass for j in self.joints]))
        object.__setattr__(self, "_coms", np.array([j.link_com for j in self.joints]))
        K = np.array([skew(j.axis) for j in self.joints])
        object.__setattr__(self, "_K", K)
        object.__setattr__(self, "_KK", K @ K)

    @property
    def n_joints(self) -> int:
        return 7

    def limits(self):
        """(q_min, q_max, dq_max, tau_max) arrays."""
        return (np.array([j.q_min for j in self.joints]),
                np.array([j.q_max for j in self.joints]),
                np.array([j.dq_max for j in self.joints]),
                np.array([j.tau_max for j in self.joints]))


@dataclass(frozen=True)
class DualArmModel:
    """Two fixed-base serial arms; the world frame sits at the left arm base."""

    left: ArmModel
    right: ArmModel
    _same_geometry: bool = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        same = (np.array_equal(self.left._axes, self.right._axes)
                and np.array_equal(self.left._off_R, self.right._off_R)
                and np.array_equal(self.left._off_t, self.right._off_t)
                and np.array_equal(self.left._masses, self.right._masses)
                and np.array_equal(self.left._coms, self.right._coms)
                and np.array_equal(self.left.end_effector_offset.rotation,
                                   self.right.end_effector_offset.rotation)
                and np.array_equal(self.left.end_effector_offset.translation,
                                   self.right.end_effector_offset.translation))
        object.__setattr__(self, "_same_geometry", same)

    @property
    def n_joints(self) -> int:
        return 14

    def limits(self):
        parts = [a.limits() for a in (self.left, self.right)]
        return tuple(np.concatenate([p[i] for p in parts]) for i in range(4))


@dataclass(frozen=True)
class ObjectModel:
    mass: float
    grasp_L: Pose                   # left contact frame expressed in object frame
    grasp_R: Pose                   # right contact frame expressed in object frame
    friction_mu: float
    contact_halfwidths: np.ndarray  # (hx, hy) of the CoP rectangle, m
    torsional_mu: float
    f_normal_min: float
    f_normal_max: float
    # The object origin sits at the CoM; a misaligned grasp is expressed by
    # offsetting the grasp pose translations instead of a separate CoM field.

    def gravity_wrench_world(self) -> np.ndarray:
        return np.array([0.0, 0.0, 0.0, 0.0, 0.0, -self.mass * GRAVITY])

    def grasp_wrench_transforms(self) -> tuple:
        """Cached (X_L, X_R) wrench transforms of the constant grasp poses;
        rebuilt transforms dominate the per-cycle equilibrium evaluation
        otherwise (hot path).
        """
        try:
            return self._wt
        except AttributeError:
            wt = (wrench_transform(self.grasp_L), wrench_transform(self.grasp_R))
            object.__setattr__(self, "_wt", wt)
            return wt


# ---------------------------------------------------------------------------
# Batched chain kinematics
# ---------------------------------------------------------------------------

def _as_batch(q: np.ndarray):
    q = np.asarray(q, dtype=float)
    if q.ndim == 1:
        return q[None, :], True
    return q, False


def chain_frames(model: ArmModel, q: np.ndarray,
                 base_R: Optional[np.ndarray] = None,
                 base_p: Optional[np.ndarray] = None):
    """World frames of every joint (after its rotation) for a batch of configs.

    Returns (R, p) with shapes (B, 7, 3, 3) and (B, 7, 3). base_R/base_p
    override the model's base pose per batch row, which lets callers fold two
    geometrically identical arms into one batch.
    """
    Q, _ = _as_batch(q)
    B = Q.shape[0]
    R = np.empty((B, 7, 3, 3))
    p = np.empty((B, 7, 3))
    cos = np.cos(Q)
    sin = np.sin(Q)
    eye = np.eye(3)
    R_cur = np.broadcast_to(model.base_pose.rotation, (B, 3, 3)) if base_R is None else base_R
    p_cur = np.broadcast_to(model.base_pose.translation, (B, 3)) if base_p is None else base_p
    for i in range(7):
        p_cur = p_cur + R_cur @ model._off_t[i]
        Rj = eye + sin[:, i, None, None] * model._K[i] \
            + (1.0 - cos[:, i, None, None]) * model._KK[i]
        R_cur = (R_cur @ model._off_R[i]) @ Rj
        R[:, i] = R_cur
        p[:, i] = p_cur
    return R, p


def ee_frame(model: ArmModel, q: np.ndarray):
    """World rotation and position of the end-effector frame, batched."""
    R, p = chain_frames(model, q)
    R_ee = R[:, -1] @ model.end_effector_offset.rotation
    p_ee = p[:, -1] + np.einsum("bij,j->bi", R[:, -1], model.end_effector_offset.translation)
    return R_ee, p_ee


def forward_kinematics(model: ArmModel, q: np.ndarray) -> Pose:
    """End-effector pose in the world frame for a single configuration."""
    R_ee, p_ee = ee_frame(model, np.asarray(q, dtype=float)[None, :])
    return Pose(R_ee[0], p_ee[0])


def jacobian_world_batch(model: ArmModel, q: np.ndarray):
    """(B, 6, 7) world-frame end-effector Jacobian, rows (angular; linear)."""
    R, p = chain_frames(model, q)
    p_ee = p[:, -1] + np.einsum("bij,j->bi", R[:, -1], model.end_effector_offset.translation)
    z = np.einsum("bkij,kj->bki", R, model._axes)          # (B, 7, 3)
    r = p_ee[:, None, :] - p                               # (B, 7, 3)
    J = np.empty((q.shape[0] if np.asarray(q).ndim == 2 else 1, 6, 7))
    J[:, :3, :] = np.transpose(z, (0, 2, 1))
    J[:, 3:, :] = np.transpose(np.cross(z, r), (0, 2, 1))
    return J


def jacobian_world(model: ArmModel, q: np.ndarray) -> np.ndarray:
    """6x7 world-frame Jacobian, rows (angular; linear), for one configuration."""
    return jacobian_world_batch(model, np.asarray(q, dtype=float)[None, :])[0]


def jacobian_local(model: ArmModel, q: np.ndarray) -> np.ndarray:
    """Jacobian with both blocks rotated into the end-effector frame."""
    J = jacobian_world(model, q)
    R_ee = forward_kinematics(model, q).rotation
    Jl = np.empty_like(J)
    Jl[:3] = R_ee.T @ J[:3]
    Jl[3:] = R_ee.T @ J[3:]
    return Jl


def jacobian_rotational(model: ArmModel, q: np.ndarray) -> np.ndarray:
    """Angular block of the world-frame Jacobian."""
    return jacobian_world(model, q)[:3]


def dual_ee_poses(dual: DualArmModel, q: np.ndarray):
    q = np.asarray(q, dtype=float)
    return (forward_kinematics(dual.left, q[:7]),
            forward_kinematics(dual.right, q[7:]))


def relative_jacobian(dual: DualArmModel, q: np.ndarray) -> np.ndarray:
    """6x14 map from stacked joint velocities to the twist of the right hand
    relative to the left hand, expressed in the left-hand frame.
    """
    q = np.asarray(q, dtype=float)
    JL = jacobian_world(dual.left, q[:7])
    JR = jacobian_world(dual.right, q[7:])
    XL = forward_kinematics(dual.left, q[:7])
    XR = forward_kinematics(dual.right, q[7:])
    RLt = XL.rotation.T
    dp = XR.translation - XL.translation
    J = np.zeros((6, 14))
    # angular: R_L^T (w_R - w_L)
    J[:3, :7] = -RLt @ JL[:3]
    J[:3, 7:] = RLt @ JR[:3]
    # linear: R_L^T (v_R - v_L - w_L x dp)
    J[3:, :7] = -RLt @ (JL[3:] - skew(dp) @ JL[:3])
    J[3:, 7:] = RLt @ JR[3:]
    return J


# ---------------------------------------------------------------------------
# Statics and dynamics
# ---------------------------------------------------------------------------

def _arm_gravity_batch(model: ArmModel, Q: np.ndarray) -> np.ndarray:
    """Static gravity torques for a batch of single-arm configurations."""
    R, p = chain_frames(model, Q)
    return gravity_from_frames(model, R, p)


def gravity_from_frames(model: ArmModel, R: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Static gravity torques from precomputed chain frames (see chain_frames)."""
    c = p + np.matmul(R, model._coms[:, :, None])[..., 0]    # (B, 7, 3) CoM world
    z = np.matmul(R, model._axes[:, :, None])[..., 0]
    m = model._masses
    # Suffix sums over links l >= j of m_l and m_l * c_l.
    mc = m[None, :, None] * c
    mc_suffix = np.flip(np.cumsum(np.flip(mc, axis=1), axis=1), axis=1)
    m_suffix = np.flip(np.cumsum(np.flip(m)))
    lever = mc_suffix - m_suffix[None, :, None] * p          # (B, 7, 3)
    # G = dU/dq: torque to hold the chain against gravity along -z, so the
    # cross product with the gravity direction reduces to its x/y terms.
    return GRAVITY * (z[..., 0] * lever[..., 1] - z[..., 1] * lever[..., 0])


def gravity_torques_batch(dual: DualArmModel, Q: np.ndarray) -> np.ndarray:
    """(B, 14) gravity torques."""
    Q = np.asarray(Q, dtype=float)
    return np.concatenate([_arm_gravity_batch(dual.left, Q[:, :7]),
                           _arm_gravity_batch(dual.right, Q[:, 7:])], axis=1)


def gravity_torques(dual: DualArmModel, q: np.ndarray) -> np.ndarray:
    """14-vector of gravity torques G(q)."""
    return gravity_torques_batch(dual, np.asarray(q, dtype=float)[None, :])[0]


def _arm_rnea(model: ArmModel, q, dq, ddq, gravity: float) -> np.ndarray:
    """Recursive Newton-Euler for one arm; world-frame vector formulation."""
    R, p = chain_frames(model, q[None, :])
    R, p = R[0], p[0]
    z = np.einsum("kij,kj->ki", R, model._axes)
    n = 7
    w = np.zeros((n, 3))
    a = np.zeros((n, 3))       # angular acceleration
    ap = np.zeros((n, 3))      # linear acceleration of joint origins
    g_acc = np.array([0.0, 0.0, gravity])  # fictitious base acceleration
    w_prev = np.zeros(3)
    a_prev = np.zeros(3)
    ap_prev = g_acc
    p_prev = model.base_pose.translation
    for i in range(n):
        r = p[i] - p_prev
        ap_i = ap_prev + np.cross(a_prev, r) + np.cross(w_prev, np.cross(w_prev, r))
        w_i = w_prev + z[i] * dq[i]
        a_i = a_prev + z[i] * ddq[i] + np.cross(w_prev, z[i]) * dq[i]
        w[i], a[i], ap[i] = w_i, a_i, ap_i
        w_prev, a_prev, ap_prev, p_prev = w_i, a_i, ap_i, p[i]
    # Link loads
    F = np.zeros((n, 3))
    N = np.zeros((n, 3))
    c = p + np.einsum("kij,kj->ki", R, model._coms)
    for i in range(n):
        rc = c[i] - p[i]
        ac = ap[i] + np.cross(a[i], rc) + np.cross(w[i], np.cross(w[i], rc))
        m = model._masses[i]
        I_w = R[i] @ model.joints[i].link_inertia @ R[i].T
        F[i] = m * ac
        N[i] = I_w @ a[i] + np.cross(w[i], I_w @ w[i])
    tau = np.zeros(n)
    f_child = np.zeros(3)
    n_child = np.zeros(3)
    p_child = np.zeros(3)
    for i in range(n - 1, -1, -1):
        f_i = F[i] + f_child
        n_i = N[i] + n_child + np.cross(c[i] - p[i], F[i])
        if i < n - 1:
            n_i = n_i + np.cross(p_child - p[i], f_child)
        tau[i] = z[i] @ n_i
        f_child, n_child, p_child = f_i, n_i, p[i]
    return tau


def coriolis_torques(dual: DualArmModel, q: np.ndarray, dq: np.ndarray) -> np.ndarray:
    """14-vector of Coriolis/centrifugal torques C(q, dq), gravity off."""
    q = np.asarray(q, dtype=float)
    dq = np.asarray(dq, dtype=float)
    zero = np.zeros(7)
    return np.concatenate([
        _arm_rnea(dual.left, q[:7], dq[:7], zero, 0.0),
        _arm_rnea(dual.right, q[7:], dq[7:], zero, 0.0),
    ])


def inverse_dynamics(dual: DualArmModel, q, dq, ddq) -> np.ndarray:
    """Full inverse dynamics tau = M(q) ddq + C(q, dq) + G(q)."""
    q, dq, ddq = (np.asarray(v, dtype=float) for v in (q, dq, ddq))
    return np.concatenate([
        _arm_rnea(dual.left, q[:7], dq[:7], ddq[:7], GRAVITY),
        _arm_rnea(dual.right, q[7:], dq[7:], ddq[7:], GRAVITY),
    ])


def mass_matrix(dual: DualArmModel, q: np.ndarray) -> np.ndarray:
    """14x14 joint-space mass matrix, assembled column-wise through the RNEA."""
    q = np.asarray(q, dtype=float)
    M = np.zeros((14, 14))
    zero = np.zeros(7)
    for arm, sl in ((dual.left, slice(0, 7)), (dual.right, slice(7, 14))):
        for j in range(7):
            e = np.zeros(7)
            e[j] = 1.0
            M[sl, sl.start + j] = _arm_rnea(arm, q[sl], zero, e, 0.0)
    return 0.5 * (M + M.T)


def potential_energy(dual: DualArmModel, q: np.ndarray) -> float:
    """Total gravitational potential of both arms (for the energy oracle)."""
    q = np.asarray(q, dtype=float)
    U = 0.0
    for arm, qa in ((dual.left, q[:7]), (dual.right, q[7:])):
        R, p = chain_frames(arm, qa[None, :])
        c = p[0] + np.einsum("kij,kj->ki", R[0], arm._coms)
        U += GRAVITY * float(arm._masses @ c[:, 2])
    return U


# ---------------------------------------------------------------------------
# Model file I/O
# ---------------------------------------------------------------------------

def _pose_from_cfg(cfg: dict, where: str) -> Pose:
    try:
        return Pose.from_quat_trans(cfg["quat"], cfg["trans"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelError(f"{where}: bad pose ({exc})") from exc


def _pose_to_cfg(pose: Pose) -> dict:
    return {"quat": [float(v) for v in rotation_to_quaternion(pose.rotation)],
            "trans": [float(v) for v in pose.translation]}


def _joint_from_cfg(cfg: dict, where: str) -> JointDef:
    for key in ("axis", "offset", "q_min", "q_max", "dq_max", "tau_max",
                "link_mass", "link_com", "link_inertia"):
        if key not in cfg:
            raise ModelError(f"{where}: missing field '{key}'")
    axis = np.asarray(cfg["axis"], dtype=float)
    nrm = np.linalg.norm(axis)
    if abs(nrm - 1.0) > 1e-6:
        raise ModelError(f"{where}.axis: not a unit vector")
    if not cfg["q_min"] < cfg["q_max"]:
        raise ModelError(f"{where}: q_min must be < q_max")
    if not cfg["dq_max"] > 0:
        raise ModelError(f"{where}: dq_max must be positive")
    if not cfg["tau_max"] > 0:
        raise ModelError(f"{where}: tau_max must be positive")
    inertia = np.asarray(cfg["link_inertia"], dtype=float)
    if inertia.shape != (3, 3):
        raise ModelError(f"{where}.link_inertia: must be 3x3")
    if np.max(np.abs(inertia - inertia.T)) > 1e-12 or np.any(np.linalg.eigvalsh(inertia) <= 0):
        raise ModelError(f"{where}.link_inertia: must be symmetric positive definite")
    return JointDef(
        axis=axis / nrm,
        parent_offset=_pose_from_cfg(cfg["offset"], f"{where}.offset"),
        q_min=float(cfg["q_min"]),
        q_max=float(cfg["q_max"]),
        dq_max=float(cfg["dq_max"]),
        tau_max=float(cfg["tau_max"]),
        link_mass=float(cfg["link_mass"]),
        link_com=np.asarray(cfg["link_com"], dtype=float),
        link_inertia=inertia,
    )


def _arm_from_cfg(cfg: dict, where: str) -> ArmModel:
    joints = cfg.get("joints")
    if not isinstance(joints, list) or len(joints) != 7:
        raise ModelError(f"{where}.joints: expected a list of 7 joints")
    return ArmModel(
        joints=tuple(_joint_from_cfg(j, f"{where}.joints[{i}]") for i, j in enumerate(joints)),
        base_pose=_pose_from_cfg(cfg["base_pose"], f"{where}.base_pose"),
        end_effector_offset=_pose_from_cfg(cfg["end_effector_offset"],
                                           f"{where}.end_effector_offset"),
    )


def _object_from_cfg(cfg: dict) -> ObjectModel:
    for key in ("mass", "grasp_left", "grasp_right", "friction_mu",
                "contact_halfwidths", "torsional_mu", "f_normal_min", "f_normal_max"):
        if key not in cfg:
            raise ModelError(f"object: missing field '{key}'")
    if cfg["mass"] < 0:
        raise ModelError("object.mass: must be >= 0")
    if not cfg["friction_mu"] > 0:
        raise ModelError("object.friction_mu: must be positive")
    if cfg["f_normal_min"] < 0:
        raise ModelError("object.f_normal_min: must be >= 0")
    if not cfg["f_normal_min"] < cfg["f_normal_max"]:
        raise ModelError("object.f_normal_min: must be < f_normal_max")
    return ObjectModel(
        mass=float(cfg["mass"]),
        grasp_L=_pose_from_cfg(cfg["grasp_left"], "object.grasp_left"),
        grasp_R=_pose_from_cfg(cfg["grasp_right"], "object.grasp_right"),
        friction_mu=float(cfg["friction_mu"]),
        contact_halfwidths=np.asarray(cfg["contact_halfwidths"], dtype=float).reshape(2),
        torsional_mu=float(cfg["torsional_mu"]),
        f_normal_min=float(cfg["f_normal_min"]),
        f_normal_max=float(cfg["f_normal_max"]),
    )


def load_model(path) -> tuple:
    """Load (DualArmModel, ObjectModel) from a YAML model file."""
    try:
        with open(path) as fh:
            cfg = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ModelError(f"{path}: parse error: {exc}") from exc
    if not isinstance(cfg, dict) or "arms" not in cfg or "object" not in cfg:
        raise ModelError(f"{path}: expected top-level 'arms' and 'object' sections")
    arms = cfg["arms"]
    dual = DualArmModel(left=_arm_from_cfg(arms["left"], "arms.left"),
                        right=_arm_from_cfg(arms["right"], "arms.right"))
    obj = _object_from_cfg(cfg["object"])
    return dual, obj


def dump_model(dual: DualArmModel, obj: ObjectModel, path) -> None:
    """Serialize models back to the YAML schema accepted by load_model."""
    def joint_cfg(j: JointDef) -> dict:
        return {
            "axis": [float(v) for v in j.axis],
            "offset": _pose_to_cfg(j.parent_offset),
            "q_min": j.q_min, "q_max": j.q_max,
            "dq_max": j.dq_max, "tau_max": j.tau_max,
            "link_mass": j.link_mass,
            "link_com": [float(v) for v in j.link_com],
            "link_inertia": [[float(v) for v in row] for row in j.link_inertia],
        }

    def arm_cfg(a: ArmModel) -> dict:
        return {
            "base_pose": _pose_to_cfg(a.base_pose),
            "end_effector_offset": _pose_to_cfg(a.end_effector_offset),
            "joints": [joint_cfg(j) for j in a.joints],
        }

    cfg = {
        "arms": {"left": arm_cfg(dual.left), "right": arm_cfg(dual.right)},
        "object": {
            "mass": obj.mass,
            "grasp_left": _pose_to_cfg(obj.grasp_L),
            "grasp_right": _pose_to_cfg(obj.grasp_R),
            "friction_mu": obj.friction_mu,
            "contact_halfwidths": [float(v) for v in obj.contact_halfwidths],
            "torsional_mu": obj.torsional_mu,
            "f_normal_min": obj.f_normal_min,
            "f_normal_max": obj.f_normal_max,
        },
    }
    with open(path, "w") as fh:
        yaml.safe_dump(cfg, fh, sort_keys=False, default_flow_style=None)
