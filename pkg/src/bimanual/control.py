"""Torque-level interaction controller.

Superimposes independent efforts per arm: joint-space saturating PD toward
the retargeted posture, a nonlinear fractal-impedance (NLPD) Cartesian
controller per end-effector, a linear saturating PD on the relative pose
between the hands, gravity/Coriolis compensation, and the contact-wrench
feedforward. Every Cartesian controller acts on six decoupled error channels
in pose_error coordinates (rotation log; translation).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import retarget as rt
from . import robot as rb
from .spatial import Pose, pose_error, skew

_EPISODE_EPS = 1e-9


@dataclass(frozen=True)
class PdParams:
    """Saturating PD channel: linear spring of stiffness k_p = f/d inside
    |error| < d, constant force f outside; damping k_d = 2 zeta sqrt(k_p).
    """

    f: float      # saturation force, N or N*m
    d: float      # saturation distance, m or rad
    zeta: float   # damping ratio

    def __post_init__(self):
        if self.f <= 0 or self.d <= 0 or self.zeta < 0:
            raise ValueError("PdParams requires f > 0, d > 0, zeta >= 0")
        # derived gains, precomputed once (hot path)
        object.__setattr__(self, "k_p", self.f / self.d)
        object.__setattr__(self, "k_d", 2.0 * self.zeta * math.sqrt(self.k_p))


@dataclass(frozen=True)
class NlpdParams:
    """Fractal-impedance channel parameters.

    xi sets the saturation onset alpha_b = xi*d; the force profile E is
    linear (k_p * error) up to alpha_b and tanh-saturates toward e_max
    beyond it. e_max defaults to the channel's saturation force f.
    """

    pd: PdParams
    xi: float = 0.9
    e_max: Optional[float] = None

    def __post_init__(self):
        if not 0.0 < self.xi < 1.0:
            raise ValueError("xi must be in (0, 1)")
        if self.e_max is None:
            object.__setattr__(self, "e_max", self.pd.f)
        # derived saturation-branch constants, precomputed once (hot path)
        object.__setattr__(self, "e_0", self.xi * self.pd.k_p * self.pd.d)
        if self.e_max <= self.e_0:
            raise ValueError("e_max must exceed the onset force xi*k_p*d")
        object.__setattr__(self, "lam", self.e_max - self.e_0)
        object.__setattr__(self, "s", (1.0 - self.xi) * self.pd.d / (2.0 * math.pi))
        object.__setattr__(self, "alpha_b", self.xi * self.pd.d)


@dataclass(frozen=True)
class FicChannelState:
    """Per-channel episode bookkeeping: current phase and the signed error
    extremum of the ongoing divergence episode.
    """

    phase: str = "divergence"
    alpha_max: float = 0.0


def pd_force(alpha_d: float, alpha: float, alpha_dot: float,
             params: PdParams) -> float:
    """Mono-dimensional saturating PD: F_k - k_d * velocity."""
    err = alpha_d - alpha
    if abs(err) < params.d:
        f_k = params.k_p * err
    else:
        f_k = math.copysign(params.f, err)
    return f_k - params.k_d * alpha_dot


def fic_energy_force(alpha_tilde: float, params: NlpdParams) -> float:
    """Signed divergence-branch force E(error): linear spring up to the
    onset alpha_b, then a tanh branch saturating toward e_max.

    The tanh branch is stitched to sit at E_0 (within a tanh(pi) tail of
    lam, ~0.2%) at the onset and approach e_max asymptotically.
    """
    a = abs(alpha_tilde)
    if a <= params.alpha_b:
        return params.pd.k_p * alpha_tilde
    t = math.tanh((a - params.alpha_b) / (params.s * params.alpha_b) - math.pi)
    mag = 0.5 * params.lam * (t + 1.0) + params.e_0
    return math.copysign(mag, alpha_tilde)


def nlpd_force(alpha_d: float, alpha: float, alpha_dot: float,
               params: NlpdParams, state: FicChannelState):
    """Mono-dimensional fractal-impedance step; returns (force, new state).

    Divergence (error at its episode extremum): spring force E(error),
    storing the extremum. Convergence (error shrinking): linear release
    spring through half the stored extremum. The episode resets when the
    error crosses zero or exceeds the stored extremum.
    """
    a = alpha_d - alpha
    m = state.alpha_max
    new_episode = (abs(a) >= abs(m) - _EPISODE_EPS) or (a * m < 0.0)
    if new_episode:
        f_k = fic_energy_force(a, params)
        new_state = FicChannelState("divergence", a)
    else:
        f_k = (2.0 * fic_energy_force(m, params) / m) * (a - 0.5 * m)
        new_state = FicChannelState("convergence", m)
    return f_k - params.pd.k_d * alpha_dot, new_state


def table_params() -> dict:
    """The published parameter groups for the three controller families."""
    deg = math.pi / 180.0
    return {
        "cart_lin": NlpdParams(PdParams(f=25.0, d=0.08, zeta=0.8)),
        "cart_ang": NlpdParams(PdParams(f=2.0, d=8.0 * deg, zeta=0.2)),
        "rel_lin": PdParams(f=50.0, d=0.05, zeta=0.4),
        "rel_ang": PdParams(f=5.0, d=5.0 * deg, zeta=0.1),
        "joint": PdParams(f=0.3, d=10.0 * deg, zeta=0.0),
    }


@dataclass
class ControllerParams:
    cart_lin: NlpdParams = field(default_factory=lambda: table_params()["cart_lin"])
    cart_ang: NlpdParams = field(default_factory=lambda: table_params()["cart_ang"])
    rel_lin: PdParams = field(default_factory=lambda: table_params()["rel_lin"])
    rel_ang: PdParams = field(default_factory=lambda: table_params()["rel_ang"])
    joint: PdParams = field(default_factory=lambda: table_params()["joint"])


def relative_jacobian_from(J_L: np.ndarray, J_R: np.ndarray, R_L: np.ndarray,
                           p_L: np.ndarray, p_R: np.ndarray) -> np.ndarray:
    """6x14 relative Jacobian of the right hand w.r.t. the left hand,
    expressed in the left-hand frame, assembled from world quantities.
    """
    r = p_R - p_L
    J = np.zeros((6, 14))
    # twist difference, with the left angular motion sweeping the lever arm
    J[:3, 7:] = J_R[:3]
    J[3:, 7:] = J_R[3:]
    J[:3, :7] = -J_L[:3]
    J[3:, :7] = -J_L[3:] + skew(r) @ J_L[:3]
    W = np.zeros((6, 6))
    W[:3, :3] = R_L.T
    W[3:, 3:] = R_L.T
    return W @ J


class InteractionController:
    """Owns the per-channel fractal-impedance states (12 Cartesian channels:
    6 per arm). One instance per control loop.
    """

    def __init__(self, dual: rb.DualArmModel,
                 params: Optional[ControllerParams] = None):
        self.dual = dual
        self.params = params or ControllerParams()
        self.reset()

    def reset(self) -> None:
        # signed divergence-episode extrema of the 12 Cartesian channels
        self._fic_max = np.zeros((2, 6))
        # vectorized joint/relative PD gain tables
        p = self.params
        self._joint_kp = p.joint.k_p
        self._joint_kd = p.joint.k_d
        self._joint_f = p.joint.f
        self._rel_kp = np.array([p.rel_ang.k_p] * 3 + [p.rel_lin.k_p] * 3)
        self._rel_kd = np.array([p.rel_ang.k_d] * 3 + [p.rel_lin.k_d] * 3)
        self._rel_f = np.array([p.rel_ang.f] * 3 + [p.rel_lin.f] * 3)
        # per-channel NLPD constant tables (3 angular then 3 linear channels)
        self._cart_kp = np.array([p.cart_ang.pd.k_p] * 3 + [p.cart_lin.pd.k_p] * 3)
        self._cart_kd = np.array([p.cart_ang.pd.k_d] * 3 + [p.cart_lin.pd.k_d] * 3)
        self._cart_ab = np.array([p.cart_ang.alpha_b] * 3 + [p.cart_lin.alpha_b] * 3)
        self._cart_sab = np.array([p.cart_ang.s * p.cart_ang.alpha_b] * 3
                                  + [p.cart_lin.s * p.cart_lin.alpha_b] * 3)
        self._cart_lam = np.array([p.cart_ang.lam] * 3 + [p.cart_lin.lam] * 3)
        self._cart_e0 = np.array([p.cart_ang.e_0] * 3 + [p.cart_lin.e_0] * 3)

    def _fic_energy(self, x: np.ndarray) -> np.ndarray:
        """Vectorized fic_energy_force over the 6 channels of one arm."""
        a = np.abs(x)
        tanh = np.tanh((a - self._cart_ab) / self._cart_sab - math.pi)
        sat = 0.5 * self._cart_lam * (tanh + 1.0) + self._cart_e0
        return np.where(a <= self._cart_ab, self._cart_kp * x,
                        np.where(x >= 0.0, sat, -sat))

    def _nlpd_wrench(self, arm_index: int, err: np.ndarray,
                     twist: np.ndarray) -> np.ndarray:
        """6-channel NLPD wrench (torque; force) for one arm, world frame.

        Vectorized transcription of nlpd_force over the arm's six channels
        (hot path: the scalar form costs twelve Python calls per cycle).
        """
        m = self._fic_max[arm_index]
        new_episode = (np.abs(err) >= np.abs(m) - _EPISODE_EPS) | (err * m < 0.0)
        safe_m = np.where(m == 0.0, 1.0, m)
        f_conv = (2.0 * self._fic_energy(m) / safe_m) * (err - 0.5 * m)
        f_k = np.where(new_episode, self._fic_energy(err), f_conv)
        self._fic_max[arm_index] = np.where(new_episode, err, m)
        return f_k - self._cart_kd * twist

    def compute_torques(self, q: np.ndarray, dq: np.ndarray,
                        desired: rt.RetargetOutput,
                        frames: Optional[tuple] = None) -> np.ndarray:
        """Joint torque command for the measured state (q, dq) tracking the
        retargeted desired state.
        """
        q = np.asarray(q, dtype=float).reshape(14)
        dq = np.asarray(dq, dtype=float).reshape(14)
        if frames is None:
            frames = rt.dual_frames_single(self.dual, q)
        (J_L, G_L, R_L, p_L), (J_R, G_R, R_R, p_R) = frames

        tau = np.concatenate([G_L, G_R])
        if np.any(dq):
            tau += rb.coriolis_torques(self.dual, q, dq)

        # joint-space saturating PD toward the retargeted posture; the clip
        # is the saturating branch of pd_force since k_p = f/d
        e_q = desired.q_d - q
        tau += np.clip(self._joint_kp * e_q, -self._joint_f, self._joint_f) \
            - self._joint_kd * dq

        # contact-wrench feedforward: the load each hand must resist, i.e.
        # the torque that holds the measured-on-hand wrench statically
        for sl, J, R, lam in ((slice(0, 7), J_L, R_L, desired.lambda_L_d),
                              (slice(7, 14), J_R, R_R, desired.lambda_R_d)):
            w = np.concatenate([R @ lam[:3], R @ lam[3:]])
            tau[sl] -= J.T @ w

        # per-arm Cartesian NLPD in world frame
        for k, (sl, J, R, pos, X_d) in enumerate(
                ((slice(0, 7), J_L, R_L, p_L, desired.X_L_d),
                 (slice(7, 14), J_R, R_R, p_R, desired.X_R_d))):
            err = pose_error(Pose(R, pos), X_d)
            twist = J @ dq[sl]
            tau[sl] += J.T @ self._nlpd_wrench(k, err, twist)

        # relative-pose saturating PD between the hands, left-hand frame
        J_rel = relative_jacobian_from(J_L, J_R, R_L, p_L, p_R)
        X_rel = Pose(R_L, p_L).inverse() @ Pose(R_R, p_R)
        X_rel_d = desired.X_L_d.inverse() @ desired.X_R_d
        err_rel = pose_error(X_rel, X_rel_d)
        v_rel = J_rel @ dq
        w_rel = np.clip(self._rel_kp * err_rel, -self._rel_f, self._rel_f) \
            - self._rel_kd * v_rel
        tau += J_rel.T @ w_rel
        return tau
