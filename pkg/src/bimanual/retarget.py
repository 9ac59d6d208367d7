"""Per-cycle retargeting optimizer: maps a target object pose to a feasible
desired state (joint positions, contact wrenches) under static equilibrium,
contact stability and joint limits, one QP iteration per control cycle.

Wrench convention: lambda_L / lambda_R are the wrenches the object applies on
the hands, expressed in the contact frames, whose z axes are the object's
outward surface normals (so the squeeze normal force is positive). With that
convention the object's static equilibrium reads

    Xow(q) lambda_O - XoL lambda_L - XoR lambda_R = 0

where Xow is the (gravity-simplified) wrench transform from world to object
frame and XoL / XoR are the constant grasp wrench transforms.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import robot as rb
from .qp import QpProblem, QpSolution, QpSolver
from .spatial import Pose, pose_error, rotation_log, skew, wrench_transform

try:
    from ._kernels import frames_batch as _frames_batch_jit
    from ._kernels import cycle_rows as _cycle_rows_jit
except ImportError:  # numba not installed; vectorized numpy path is used
    _frames_batch_jit = None
    _cycle_rows_jit = None


class RetargetError(Exception):
    pass


class NoFeasibleWrench(RetargetError):
    """Equilibrium is unsatisfiable within the contact/force limits."""


class InfeasibleStart(RetargetError):
    """Initial state violates the inequality set beyond tolerance."""


@dataclass
class DecisionState:
    """Decision vector x = (q_d, lambda_L, lambda_R), d = 14 + 6 + 6 = 26."""

    q_d: np.ndarray
    lambda_L: np.ndarray    # (torque; force) in left contact frame
    lambda_R: np.ndarray

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.q_d, self.lambda_L, self.lambda_R])

    @staticmethod
    def from_vector(v: np.ndarray) -> "DecisionState":
        v = np.asarray(v, dtype=float)
        return DecisionState(v[:14].copy(), v[14:20].copy(), v[20:26].copy())

    def copy(self) -> "DecisionState":
        return DecisionState(self.q_d.copy(), self.lambda_L.copy(), self.lambda_R.copy())


@dataclass
class RetargetConfig:
    dt: float = 1e-3
    w_pose: np.ndarray = field(default_factory=lambda: np.array([5.0, 5.0, 5.0, 50.0, 50.0, 50.0]))
    w_reg_q: float = 1e-3
    w_reg_lambda: float = 1e-6
    w_posture: float = 1e-4
    nominal_q: Optional[np.ndarray] = None
    # Weak attraction of each normal force toward a set squeeze keeps the
    # wrenches interior to the friction cone instead of riding its boundary.
    squeeze_force: Optional[float] = None   # None: contact-limit midpoint
    w_squeeze: float = 1e-4
    torque_ratio: float = 0.9
    torque_margin: float = 0.0          # N*m shaved off the ratio-scaled limit
    position_margin: float = 0.01       # rad kept clear of the hard stops
    velocity_scale: float = 1.0         # fraction of dq_max usable per cycle
    lambda_rate: float = 2000.0         # N/s and N*m/s per wrench component
    contact_scale: float = 1.0          # tightening of the friction/CoP rows
    tikhonov: float = 1e-9

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if not 0.0 < self.torque_ratio <= 1.0:
            raise ValueError("torque_ratio must be in (0, 1]")
        self.w_pose = np.asarray(self.w_pose, dtype=float).reshape(6)
        if np.any(self.w_pose < 0) or self.w_reg_q < 0 or self.w_reg_lambda < 0 \
                or self.w_posture < 0:
            raise ValueError("weights must be non-negative")


@dataclass
class RetargetOutput:
    q_d: np.ndarray
    lambda_L_d: np.ndarray
    lambda_R_d: np.ndarray
    X_L_d: Pose
    X_R_d: Pose
    clamped: bool
    qp_status: str


# ---------------------------------------------------------------------------
# Frames and equilibrium
# ---------------------------------------------------------------------------

def object_pose(dual: rb.DualArmModel, obj: rb.ObjectModel, q: np.ndarray,
                via: str = "left") -> Pose:
    """World pose of the object frame, derived through one hand's grasp."""
    if via == "left":
        return rb.forward_kinematics(dual.left, np.asarray(q)[:7]) @ obj.grasp_L.inverse()
    return rb.forward_kinematics(dual.right, np.asarray(q)[7:]) @ obj.grasp_R.inverse()


def equilibrium_residual(dual: rb.DualArmModel, obj: rb.ObjectModel,
                         q: np.ndarray, lambda_L: np.ndarray,
                         lambda_R: np.ndarray,
                         rotations: Optional[tuple] = None) -> np.ndarray:
    """6-vector; zero iff the object is in static equilibrium.

    The world-to-object rotation is averaged over the two chains' estimates so
    the analytic Jacobian is the half-averaged expression over both arms.
    Pass the two world hand rotations to skip the kinematics evaluation.
    """
    q = np.asarray(q, dtype=float)
    f_O = obj.gravity_wrench_world()[3:]
    if rotations is None:
        R_L = rb.forward_kinematics(dual.left, q[:7]).rotation
        R_R = rb.forward_kinematics(dual.right, q[7:]).rotation
    else:
        R_L, R_R = rotations
    # ^O R_W via hand X is grasp_X.R @ R_X^T
    g_force = 0.5 * (obj.grasp_L.rotation @ (R_L.T @ f_O)
                     + obj.grasp_R.rotation @ (R_R.T @ f_O))
    X_L, X_R = obj.grasp_wrench_transforms()
    res = np.zeros(6)
    res[3:] = g_force
    res -= X_L @ np.asarray(lambda_L, dtype=float)
    res -= X_R @ np.asarray(lambda_R, dtype=float)
    return res


def equilibrium_jacobian(dual: rb.DualArmModel, obj: rb.ObjectModel,
                         q: np.ndarray, lambda_L: np.ndarray,
                         lambda_R: np.ndarray) -> np.ndarray:
    """6x26 Jacobian of equilibrium_residual in the decision variable, with
    residual(x + dx) ~ residual(x) + J dx.
    """
    q = np.asarray(q, dtype=float)
    f_O = obj.gravity_wrench_world()[3:]
    X_L, X_R = obj.grasp_wrench_transforms()
    J = np.zeros((6, 26))
    for sl, arm, grasp in ((slice(0, 7), dual.left, obj.grasp_L),
                           (slice(7, 14), dual.right, obj.grasp_R)):
        qa = q[sl]
        R_X = rb.forward_kinematics(arm, qa).rotation
        J_rot_local = R_X.T @ rb.jacobian_rotational(arm, qa)
        # d(^O R_W f_O)/dq through hand X: ^O R_X S(^X R_W f_O) (^X R_W J^rot)
        J[3:, sl] = 0.5 * grasp.rotation @ skew(R_X.T @ f_O) @ J_rot_local
    J[:, 14:20] = -X_L
    J[:, 20:26] = -X_R
    return J


def quasi_static_torque(dual: rb.DualArmModel, q: np.ndarray,
                        lambda_L: np.ndarray, lambda_R: np.ndarray) -> np.ndarray:
    """Joint torque each arm needs while carrying its contact wrench:
    tau = G(q) - J^T (R lambda) per arm, lambda being the on-hand wrench.
    """
    q = np.asarray(q, dtype=float)
    tau = rb.gravity_torques(dual, q)
    for sl, arm, lam in ((slice(0, 7), dual.left, lambda_L),
                         (slice(7, 14), dual.right, lambda_R)):
        X = rb.forward_kinematics(arm, q[sl])
        w = np.empty(6)
        w[:3] = X.rotation @ np.asarray(lam)[:3]
        w[3:] = X.rotation @ np.asarray(lam)[3:]
        tau[sl] -= rb.jacobian_world(arm, q[sl]).T @ w
    return tau


_FD_STEP = 1e-5


@dataclass
class ArmFrames:
    """Per-cycle batched kinematics of one arm: row 0 is the nominal
    configuration, rows 1..7 perturb one joint each by +h for the torque
    finite differences. Everything torque-related derives from these frames
    by cheap einsums, so a cycle needs at most one chain evaluation per arm.
    """

    q: np.ndarray
    J_b: np.ndarray       # (8, 6, 7) world jacobians
    G_b: np.ndarray       # (8, 7) gravity torques
    R_ee_b: np.ndarray    # (8, 3, 3) end-effector rotations
    p_ee: np.ndarray      # (3,) nominal end-effector position

    @property
    def X_ee(self) -> Pose:
        return Pose(self.R_ee_b[0], self.p_ee)

    @property
    def J(self) -> np.ndarray:
        return self.J_b[0]


def _fd_batch(qa: np.ndarray, h: float) -> np.ndarray:
    Q = np.repeat(qa[None, :], 8, axis=0)
    idx = np.arange(7)
    Q[1 + idx, idx] += h
    return Q


def _frames_from_chain(arm: rb.ArmModel, R: np.ndarray, p: np.ndarray):
    """(J_b, G_b, R_ee_b, p_ee_b) for one arm's rows of a chain-frame batch."""
    off = arm.end_effector_offset
    B = R.shape[0]
    R7 = R[:, -1]
    R_ee = R7 @ off.rotation
    p_ee = p[:, -1] + R7 @ off.translation
    z = np.matmul(R, arm._axes[:, :, None])[..., 0]
    r = p_ee[:, None, :] - p
    J = np.empty((B, 6, 7))
    J[:, :3] = z.transpose(0, 2, 1)
    zxr = np.empty_like(z)
    zxr[..., 0] = z[..., 1] * r[..., 2] - z[..., 2] * r[..., 1]
    zxr[..., 1] = z[..., 2] * r[..., 0] - z[..., 0] * r[..., 2]
    zxr[..., 2] = z[..., 0] * r[..., 1] - z[..., 1] * r[..., 0]
    J[:, 3:] = zxr.transpose(0, 2, 1)
    G = rb.gravity_from_frames(arm, R, p)
    return J, G, R_ee, p_ee


def _frames_batch(arm: rb.ArmModel, Q: np.ndarray, base_R: np.ndarray,
                  base_p: np.ndarray):
    if _frames_batch_jit is not None:
        off = arm.end_effector_offset
        return _frames_batch_jit(arm._axes, arm._K, arm._KK, arm._off_R,
                                 arm._off_t, arm._masses, arm._coms,
                                 off.rotation, off.translation,
                                 base_R, base_p, Q)
    R, p = rb.chain_frames(arm, Q, base_R=base_R, base_p=base_p)
    return _frames_from_chain(arm, R, p)


def _base_batch(arm: rb.ArmModel, B: int):
    base_R = np.empty((B, 3, 3))
    base_p = np.empty((B, 3))
    base_R[:] = arm.base_pose.rotation
    base_p[:] = arm.base_pose.translation
    return base_R, base_p


def arm_frames(arm: rb.ArmModel, qa: np.ndarray, h: float = _FD_STEP) -> ArmFrames:
    qa = np.asarray(qa, dtype=float)
    base_R, base_p = _base_batch(arm, 8)
    J, G, R_ee, p_ee = _frames_batch(arm, _fd_batch(qa, h), base_R, base_p)
    return ArmFrames(q=qa.copy(), J_b=J, G_b=G, R_ee_b=R_ee, p_ee=p_ee[0])


def dual_frames(dual: rb.DualArmModel, q: np.ndarray,
                h: float = _FD_STEP) -> tuple:
    """(ArmFrames, ArmFrames); arms with identical joint geometry share a
    single chain evaluation over the stacked perturbation batch.
    """
    q = np.asarray(q, dtype=float)
    if not dual._same_geometry:
        return (arm_frames(dual.left, q[:7], h), arm_frames(dual.right, q[7:], h))
    Q = np.vstack([_fd_batch(q[:7], h), _fd_batch(q[7:], h)])
    base_R = np.empty((16, 3, 3))
    base_p = np.empty((16, 3))
    base_R[:8] = dual.left.base_pose.rotation
    base_p[:8] = dual.left.base_pose.translation
    base_R[8:] = dual.right.base_pose.rotation
    base_p[8:] = dual.right.base_pose.translation
    J, G, R_ee, p_ee = _frames_batch(dual.left, Q, base_R, base_p)
    return (ArmFrames(q=q[:7].copy(), J_b=J[:8], G_b=G[:8],
                      R_ee_b=R_ee[:8], p_ee=p_ee[0]),
            ArmFrames(q=q[7:].copy(), J_b=J[8:], G_b=G[8:],
                      R_ee_b=R_ee[8:], p_ee=p_ee[8]))


def dual_frames_single(dual: rb.DualArmModel, q: np.ndarray) -> tuple:
    """Nominal-configuration kinematics of both arms without the perturbation
    rows: ((J, G, R_ee, p_ee) left, (J, G, R_ee, p_ee) right). Cheaper than
    dual_frames when no torque linearization is needed.
    """
    q = np.asarray(q, dtype=float)
    if dual._same_geometry:
        Q = np.vstack([q[:7], q[7:]])
        base_R = np.stack([dual.left.base_pose.rotation,
                           dual.right.base_pose.rotation])
        base_p = np.stack([dual.left.base_pose.translation,
                           dual.right.base_pose.translation])
        J, G, R_ee, p_ee = _frames_batch(dual.left, Q, base_R, base_p)
        return ((J[0], G[0], R_ee[0], p_ee[0]), (J[1], G[1], R_ee[1], p_ee[1]))
    out = []
    for arm, qa in ((dual.left, q[:7]), (dual.right, q[7:])):
        base_R, base_p = _base_batch(arm, 1)
        J, G, R_ee, p_ee = _frames_batch(arm, qa[None, :], base_R, base_p)
        out.append((J[0], G[0], R_ee[0], p_ee[0]))
    return tuple(out)


def _tau_and_jac(frames: ArmFrames, lam: np.ndarray, h: float = _FD_STEP):
    """(tau, d tau/d q) of one arm at fixed contact wrench from cached frames,
    by one-sided differences over the perturbation rows.
    """
    lam = np.asarray(lam, dtype=float)
    w = np.empty((8, 6))
    w[:, :3] = frames.R_ee_b @ lam[:3]
    w[:, 3:] = frames.R_ee_b @ lam[3:]
    tau = frames.G_b - np.einsum("bij,bi->bj", frames.J_b, w)
    Dq = (tau[1:8] - tau[0]).T / h
    return tau[0], Dq


def torque_jacobian_q(dual: rb.DualArmModel, q: np.ndarray,
                      lambda_L: np.ndarray, lambda_R: np.ndarray,
                      h: float = _FD_STEP) -> np.ndarray:
    """14x14 block-diagonal d tau / d q by batched central differences."""
    q = np.asarray(q, dtype=float)
    D = np.zeros((14, 14))
    for sl, arm, lam in ((slice(0, 7), dual.left, lambda_L),
                         (slice(7, 14), dual.right, lambda_R)):
        _, D[sl, sl] = _tau_and_jac(arm_frames(arm, q[sl], h), lam, h)
    return D


def torque_jacobian_lambda(dual: rb.DualArmModel, q: np.ndarray) -> np.ndarray:
    """14x12 analytic d tau / d (lambda_L; lambda_R)."""
    q = np.asarray(q, dtype=float)
    D = np.zeros((14, 12))
    for k, (sl, arm) in enumerate(((slice(0, 7), dual.left), (slice(7, 14), dual.right))):
        X = rb.forward_kinematics(arm, q[sl])
        W = np.zeros((6, 6))
        W[:3, :3] = X.rotation
        W[3:, 3:] = X.rotation
        D[sl, 6 * k:6 * k + 6] = -rb.jacobian_world(arm, q[sl]).T @ W
    return D


def _equilibrium_from_frames(obj: rb.ObjectModel, frames: tuple,
                             lambda_L: np.ndarray, lambda_R: np.ndarray):
    """(residual, jacobian) of the object equilibrium from cached frames."""
    f_O = obj.gravity_wrench_world()[3:]
    res = np.zeros(6)
    J = np.zeros((6, 26))
    wt_L, wt_R = obj.grasp_wrench_transforms()
    X_L, X_R = -wt_L, -wt_R
    for k, (sl, grasp) in enumerate(((slice(0, 7), obj.grasp_L),
                                     (slice(7, 14), obj.grasp_R))):
        R_X = frames[k].R_ee_b[0]
        f_local = R_X.T @ f_O
        res[3:] += 0.5 * grasp.rotation @ f_local
        J_rot_local = R_X.T @ frames[k].J[:3]
        J[3:, sl] = 0.5 * grasp.rotation @ skew(f_local) @ J_rot_local
    res += X_L @ np.asarray(lambda_L, dtype=float)
    res += X_R @ np.asarray(lambda_R, dtype=float)
    J[:, 14:20] = X_L
    J[:, 20:26] = X_R
    return res, J


def _object_task(fr: ArmFrames, grasp: Pose):
    """Object-frame pose and Jacobian seen through one hand's grasp:
    (J_obj 6x7, R_o, t_o) with J_obj mapping joint motion to object twist.
    """
    R0 = fr.R_ee_b[0]
    R_o = R0 @ grasp.rotation.T
    r = -(R_o @ grasp.translation)       # object origin relative to hand
    t_o = fr.p_ee + r
    J_ee = fr.J
    J_obj = J_ee.copy()
    J_obj[3] -= r[1] * J_ee[2] - r[2] * J_ee[1]
    J_obj[4] -= r[2] * J_ee[0] - r[0] * J_ee[2]
    J_obj[5] -= r[0] * J_ee[1] - r[1] * J_ee[0]
    return J_obj, R_o, t_o


def grasp_coupling_rows(obj: rb.ObjectModel, frames: tuple):
    """(A, b) equality rows with A dx + b = 0 enforcing the rigid grasp:
    both hands' object-frame motions must agree to first order, and any
    accumulated drift between the two estimates is corrected in the step.
    Without this hard coupling the per-cycle optimization can tear the
    desired hand pair apart once inequality rows saturate asymmetrically.
    """
    J_L, R_L, t_L = _object_task(frames[0], obj.grasp_L)
    J_R, R_R, t_R = _object_task(frames[1], obj.grasp_R)
    A = np.zeros((6, 26))
    A[:, :7] = -J_L
    A[:, 7:14] = J_R
    b = np.empty(6)
    b[:3] = rotation_log(R_R @ R_L.T)
    b[3:] = t_R - t_L
    return A, b


def _cycle_terms(obj: rb.ObjectModel, frames: tuple, lambda_L: np.ndarray,
                 lambda_R: np.ndarray):
    """All configuration-dependent QP row terms in one fused kernel call.

    Returns (tau, D, res, J_eq, A_c, b_c, task) with task = (J_obj, R_o, t_o)
    of the left hand, matching _tau_and_jac / _equilibrium_from_frames /
    grasp_coupling_rows / _object_task. Requires the compiled kernels.
    """
    fL, fR = frames
    wt_L, wt_R = obj.grasp_wrench_transforms()
    fz = obj.gravity_wrench_world()[5]
    tau, D, res, J_eq, A_c, Rrel, bc_lin, J_obj, R_o, t_o = _cycle_rows_jit(
        fL.J_b, fL.G_b, fL.R_ee_b, fL.p_ee,
        fR.J_b, fR.G_b, fR.R_ee_b, fR.p_ee,
        lambda_L, lambda_R,
        obj.grasp_L.rotation, obj.grasp_L.translation,
        obj.grasp_R.rotation, obj.grasp_R.translation,
        wt_L, wt_R, fz, _FD_STEP)
    b_c = np.empty(6)
    b_c[:3] = rotation_log(Rrel)
    b_c[3:] = bc_lin
    return tau, D, res, J_eq, A_c, b_c, (J_obj, R_o, t_o)


# ---------------------------------------------------------------------------
# QP assembly
# ---------------------------------------------------------------------------

N_JOINT_ROWS = 56
N_CONTACT_ROWS = 36


def contact_stability_rows(obj: rb.ObjectModel, scale: float = 1.0):
    """(S, d) with S lam - d >= 0 the per-contact stability conditions:
    normal bounds, friction pyramid, CoP rectangle, torsional friction;
    coefficients on (tx, ty, tz, fx, fy, fz). scale < 1 tightens the
    friction/CoP/torsional coefficients so optimized wrenches keep a true
    margin for the tracking controller to spend.
    """
    mu = scale * obj.friction_mu
    hx, hy = (scale * obj.contact_halfwidths[0],
              scale * obj.contact_halfwidths[1])
    mu_t = scale * obj.torsional_mu
    S = np.array([
        [0, 0, 0, 0, 0, 1.0],
        [0, 0, 0, 0, 0, -1.0],
        [0, 0, 0, -1.0, 0, mu],
        [0, 0, 0, 1.0, 0, mu],
        [0, 0, 0, 0, -1.0, mu],
        [0, 0, 0, 0, 1.0, mu],
        [-1.0, 0, 0, 0, 0, hy],
        [1.0, 0, 0, 0, 0, hy],
        [0, -1.0, 0, 0, 0, hx],
        [0, 1.0, 0, 0, 0, hx],
        [0, 0, -1.0, 0, 0, mu_t],
        [0, 0, 1.0, 0, 0, mu_t],
    ])
    d = np.zeros(12)
    d[0] = obj.f_normal_min
    d[1] = -obj.f_normal_max
    return S, d


def _ineq_template(dual: rb.DualArmModel, obj: rb.ObjectModel,
                   config: RetargetConfig, tau_limit: Optional[np.ndarray]):
    """Everything about the inequality rows that does not change per cycle."""
    q_min, q_max, dq_max, tau_max = dual.limits()
    if tau_limit is None:
        tau_limit = config.torque_ratio * tau_max
    S, d = contact_stability_rows(obj, scale=config.contact_scale)
    A0 = np.zeros((N_JOINT_ROWS + N_CONTACT_ROWS, 26))
    idx = np.arange(14)
    A0[4 * idx, idx] = -1.0
    A0[4 * idx + 1, idx] = 1.0
    for k in range(2):
        base = N_JOINT_ROWS + 18 * k
        A0[base:base + 12, 14 + 6 * k:20 + 6 * k] = S
    return {
        "A0": A0, "S": S, "d": d, "idx": idx,
        "q_min": q_min, "q_max": q_max,
        "step_max": config.velocity_scale * dq_max * config.dt,
        "lim": tau_limit - config.torque_margin,
        "rate": config.lambda_rate * config.dt,
    }


def build_inequalities(state: DecisionState, dual: rb.DualArmModel,
                       obj: rb.ObjectModel, config: RetargetConfig,
                       tau_limit: Optional[np.ndarray] = None,
                       rate_signs: Optional[np.ndarray] = None,
                       frames: Optional[tuple] = None,
                       template: Optional[dict] = None,
                       tau_D: Optional[tuple] = None):
    """(A, b) with A dx + b >= 0: 56 joint rows then 36 contact rows.

    Joint rows per joint: position/velocity upper, lower, torque upper, lower.
    Contact rows per contact: normal min/max (2), friction pyramid (4), CoP
    rectangle (4), torsional friction (2), and 6 one-sided wrench-rate rows
    bounding each component in its current direction of travel.
    """
    q = state.q_d
    t = template if template is not None else \
        _ineq_template(dual, obj, config, tau_limit)
    idx = t["idx"]

    A = t["A0"].copy()
    b = np.empty(N_JOINT_ROWS + N_CONTACT_ROWS)

    # position/velocity rows
    b[4 * idx] = np.minimum(t["q_max"] - config.position_margin - q, t["step_max"])
    b[4 * idx + 1] = np.minimum(q - t["q_min"] - config.position_margin, t["step_max"])

    # torque rows, linearized
    if tau_D is not None:
        tau, D = tau_D
    else:
        if frames is None:
            frames = dual_frames(dual, q)
        tau = np.empty(14)
        D = np.zeros((14, 26))
        for k, (sl, lam) in enumerate(((slice(0, 7), state.lambda_L),
                                       (slice(7, 14), state.lambda_R))):
            fr = frames[k]
            tau[sl], D[sl, sl] = _tau_and_jac(fr, lam)
            R0 = fr.R_ee_b[0]
            JT = fr.J.T
            col = 14 + 6 * k
            D[sl, col:col + 3] = -JT[:, :3] @ R0
            D[sl, col + 3:col + 6] = -JT[:, 3:] @ R0
    A[4 * idx + 2] = -D
    b[4 * idx + 2] = t["lim"] - tau
    A[4 * idx + 3] = D
    b[4 * idx + 3] = t["lim"] + tau

    # contact rows
    if rate_signs is None:
        rate_signs = np.ones(12)
    j6 = np.arange(6)
    for k, lam in enumerate((state.lambda_L, state.lambda_R)):
        base = N_JOINT_ROWS + 18 * k
        col = 14 + 6 * k
        b[base:base + 12] = t["S"] @ lam - t["d"]
        A[base + 12 + j6, col + j6] = -rate_signs[6 * k + j6]
        b[base + 12:base + 18] = t["rate"]
    return A, b


def _cost_base(obj: rb.ObjectModel, config: RetargetConfig) -> np.ndarray:
    """Configuration-independent quadratic terms of the cost: increment
    regularizers, squeeze/posture curvature, and the Tikhonov floor.
    """
    H = np.zeros((26, 26))
    di = np.diag_indices(26)
    H[di[0][:14], di[1][:14]] += config.w_reg_q
    H[di[0][14:], di[1][14:]] += config.w_reg_lambda
    if config.w_squeeze > 0:
        H[19, 19] += config.w_squeeze
        H[25, 25] += config.w_squeeze
    if config.w_posture > 0 and config.nominal_q is not None:
        H[di[0][:14], di[1][:14]] += config.w_posture
    H[di] += config.tikhonov
    return H


def build_cost(state: DecisionState, X_O_target: Pose, dual: rb.DualArmModel,
               obj: rb.ObjectModel, config: RetargetConfig,
               frames: Optional[tuple] = None,
               H_base: Optional[np.ndarray] = None,
               task: Optional[tuple] = None):
    """(H, g) of the quadratic cost in the 26-dim increment.

    The object task term tracks the target through the left hand's
    grasp-mapped object frame; the right hand follows through the hard
    grasp-coupling equality rows.
    """
    q = state.q_d
    if H_base is not None:
        H = H_base.copy()
    else:
        H = _cost_base(obj, config)
    g = np.zeros(26)
    if task is not None:
        J_obj, R_o, t_o = task
    else:
        if frames is None:
            frames = dual_frames(dual, q)
        J_obj, R_o, t_o = _object_task(frames[0], obj.grasp_L)
    err = np.empty(6)
    err[:3] = rotation_log(X_O_target.rotation @ R_o.T)
    err[3:] = X_O_target.translation - t_o
    WJ = config.w_pose[:, None] * J_obj
    H[:7, :7] += J_obj.T @ WJ
    g[:7] -= WJ.T @ err
    # linear parts of the regularizing terms (curvature lives in _cost_base)
    if config.w_squeeze > 0:
        squeeze = config.squeeze_force
        if squeeze is None:
            squeeze = 0.5 * (obj.f_normal_min + obj.f_normal_max)
        g[19] += config.w_squeeze * (state.lambda_L[5] - squeeze)
        g[25] += config.w_squeeze * (state.lambda_R[5] - squeeze)
    if config.w_posture > 0 and config.nominal_q is not None:
        g[:14] += config.w_posture * (q - config.nominal_q)
    return H, g


# ---------------------------------------------------------------------------
# Initialization and stepping
# ---------------------------------------------------------------------------

def initialize(dual: rb.DualArmModel, obj: rb.ObjectModel, q_start: np.ndarray,
               config: Optional[RetargetConfig] = None) -> DecisionState:
    """Feasible starting state at q_start: the minimum-norm wrench pair that
    balances the object inside the contact-stability rows, from a one-shot QP.
    """
    config = config or RetargetConfig()
    q_start = np.asarray(q_start, dtype=float)
    q_min, q_max, _, _ = dual.limits()
    if np.any(q_start < q_min) or np.any(q_start > q_max):
        raise InfeasibleStart("q_start violates position limits")

    zero = DecisionState(q_start, np.zeros(6), np.zeros(6))
    # Equality: J_lambda dlam + residual(q, 0, 0) = 0; the residual is linear
    # in lambda so the one-shot solve is exact.
    J = equilibrium_jacobian(dual, obj, q_start, zero.lambda_L, zero.lambda_R)
    r0 = equilibrium_residual(dual, obj, q_start, zero.lambda_L, zero.lambda_R)
    A_full, b_full = build_inequalities(zero, dual, obj, config)
    # Contact-stability rows only (skip the rate rows: no previous cycle yet).
    keep = [N_JOINT_ROWS + 18 * k + j for k in range(2) for j in range(12)]
    A_in = A_full[keep][:, 14:]
    b_in = b_full[keep]
    # Bias the normal components toward the squeeze setpoint so the starting
    # wrench sits interior to the friction cone instead of on its boundary.
    squeeze = config.squeeze_force
    if squeeze is None:
        squeeze = 0.5 * (obj.f_normal_min + obj.f_normal_max)
    ref = np.zeros(12)
    ref[5] = ref[11] = squeeze
    prob = QpProblem(
        H=np.eye(12),
        g=-ref,
        A_eq=J[:, 14:], b_eq=r0,
        A_ineq=A_in, b_ineq=b_in,
    )
    sol = QpSolver(max_iterations=4000).solve(prob)
    if sol.status != "optimal":
        raise NoFeasibleWrench(
            f"no wrench pair balances the object within contact limits "
            f"(qp status: {sol.status})")
    state = DecisionState(q_start.copy(), sol.x[:6], sol.x[6:])
    A, b = build_inequalities(state, dual, obj, config)
    slack = A @ np.zeros(26) + b
    if np.min(slack) < -1e-6:
        raise InfeasibleStart(
            f"initial state violates inequality rows (worst slack {np.min(slack):.3e})")
    return state


class Retargeter:
    """Owns the per-cycle optimization state: solver, warm start, rate signs."""

    def __init__(self, dual: rb.DualArmModel, obj: rb.ObjectModel,
                 config: Optional[RetargetConfig] = None,
                 solver: Optional[QpSolver] = None,
                 tau_limit: Optional[np.ndarray] = None):
        self.dual = dual
        self.obj = obj
        self.config = config or RetargetConfig()
        self.solver = solver or QpSolver()
        self.tau_limit = tau_limit
        self._warm = None
        self._rate_signs = np.ones(12)
        self._frames = None  # batched kinematics cached at the last q_d
        self._template = _ineq_template(dual, obj, self.config, tau_limit)
        self._H_base = _cost_base(obj, self.config)

    def _frames_at(self, q: np.ndarray) -> tuple:
        if self._frames is not None and np.array_equal(self._frames[0].q, q[:7]) \
                and np.array_equal(self._frames[1].q, q[7:]):
            return self._frames
        self._frames = dual_frames(self.dual, q)
        return self._frames

    def step(self, state: DecisionState, X_O_target: Pose) -> tuple:
        """One optimization cycle; returns (new_state, RetargetOutput)."""
        cfg = self.config
        frames = self._frames_at(state.q_d)
        if _cycle_rows_jit is not None:
            tau, D, r, J_eq, A_c, b_c, task = _cycle_terms(
                self.obj, frames, state.lambda_L, state.lambda_R)
            tau_D = (tau, D)
        else:
            r, J_eq = _equilibrium_from_frames(self.obj, frames,
                                               state.lambda_L, state.lambda_R)
            A_c, b_c = grasp_coupling_rows(self.obj, frames)
            task = None
            tau_D = None
        A_in, b_in = build_inequalities(state, self.dual, self.obj, cfg,
                                        tau_limit=self.tau_limit,
                                        rate_signs=self._rate_signs,
                                        frames=frames,
                                        template=self._template,
                                        tau_D=tau_D)
        H, g = build_cost(state, X_O_target, self.dual, self.obj, cfg,
                          frames=frames, H_base=self._H_base, task=task)
        prob = QpProblem(H, g, A_eq=np.vstack([J_eq, A_c]),
                         b_eq=np.concatenate([r, b_c]),
                         A_ineq=A_in, b_ineq=b_in)
        sol = self.solver.solve(prob, warm_start=self._warm)

        if sol.status == "infeasible":
            out = RetargetOutput(
                q_d=state.q_d.copy(),
                lambda_L_d=state.lambda_L.copy(),
                lambda_R_d=state.lambda_R.copy(),
                X_L_d=frames[0].X_ee,
                X_R_d=frames[1].X_ee,
                clamped=True, qp_status=sol.status)
            self._warm = None
            return state, out

        dx = sol.x
        self._warm = dx.copy()
        self._rate_signs = np.where(dx[14:] >= 0, 1.0, -1.0)
        new_state = DecisionState.from_vector(state.as_vector() + dx)
        slack = A_in @ dx + b_in
        scale = 1.0 + np.abs(b_in)
        clamped = bool(np.min(slack / scale) <= 1e-6)
        # Cache the new configuration's frames; they double as next cycle's input.
        frames_new = self._frames_at(new_state.q_d)
        out = RetargetOutput(
            q_d=new_state.q_d.copy(),
            lambda_L_d=new_state.lambda_L.copy(),
            lambda_R_d=new_state.lambda_R.copy(),
            X_L_d=frames_new[0].X_ee,
            X_R_d=frames_new[1].X_ee,
            clamped=clamped, qp_status=sol.status)
        return new_state, out
