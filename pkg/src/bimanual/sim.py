"""Quasi-static dual-arm-plus-object simulator with oracle checks.

The plant holds the measured state (q, object pose, contact wrenches) and
settles it each cycle against the commanded joint torques: the two grasps are
stiff 6-D spring-dampers between the end-effectors and the object's grasp
frames, and the configuration relaxes to wrench balance through a damped
Newton flow whose fixed points are exact static equilibria.

Scenario files script operator command streams (pose / twist command modes),
embed their acceptance assertions, and replay the full pipeline:
operator -> admittance -> retargeting -> interaction controller -> plant.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from . import admittance as ad
from . import control as ct
from . import retarget as rt
from . import robot as rb
from .spatial import (Pose, axis_angle_rotation, pose_error,
                      quaternion_to_rotation, rotation_log,
                      rotation_to_quaternion, skew)


class ScenarioError(Exception):
    """Scenario file failed to parse or validate."""


# ---------------------------------------------------------------------------
# scenario schema


@dataclass
class CommandSegment:
    """One timestamped operator input; held until the next segment starts."""

    t: float
    mode: str = "bimanual"          # bimanual | independent
    command_mode: str = "twist"     # twist | pose
    left: np.ndarray = field(default_factory=lambda: np.zeros(6))
    right: np.ndarray = field(default_factory=lambda: np.zeros(6))

    def __post_init__(self):
        self.left = np.asarray(self.left, dtype=float).reshape(6)
        self.right = np.asarray(self.right, dtype=float).reshape(6)
        if self.mode not in ("bimanual", "independent"):
            raise ScenarioError(f"unknown mode {self.mode!r} at t={self.t}")
        if self.command_mode not in ("twist", "pose"):
            raise ScenarioError(
                f"unknown command mode {self.command_mode!r} at t={self.t}")


@dataclass
class Scenario:
    name: str
    model_path: str
    duration: float
    dt: float
    q_start: np.ndarray
    commands: list
    adaptation_enabled: bool = True
    fidelity: str = "quasi-static"   # quasi-static | penalty-dynamics
    seed: int = 0
    sensor_noise_force: float = 0.0
    sensor_noise_torque: float = 0.0
    tau_max_override: dict = field(default_factory=dict)  # joint index -> N*m
    retarget_overrides: dict = field(default_factory=dict)
    object_cfg: Optional[dict] = None   # replaces the model file's object
    assertions: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dt <= 0 or self.duration <= 0:
            raise ScenarioError("dt and duration must be positive")
        if self.fidelity not in ("quasi-static", "penalty-dynamics"):
            raise ScenarioError(f"unknown fidelity {self.fidelity!r}")
        self.q_start = np.asarray(self.q_start, dtype=float).reshape(14)
        times = [c.t for c in self.commands]
        if times != sorted(times):
            raise ScenarioError("command stream must be time-sorted")

    def effective_tau_max(self, dual: rb.DualArmModel) -> np.ndarray:
        _, _, _, tau_max = dual.limits()
        tau = tau_max.copy()
        for idx, value in self.tau_max_override.items():
            i = int(idx)
            if not 0 <= i < 14:
                raise ScenarioError(f"tau_max_override index {i} out of range")
            if float(value) <= 0:
                raise ScenarioError(f"tau_max_override[{i}] must be positive")
            tau[i] = float(value)
        return tau


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        cfg = yaml.safe_load(path.read_text())
    except yaml.YAMLError as e:
        raise ScenarioError(f"{path}: {e}") from None
    if not isinstance(cfg, dict):
        raise ScenarioError(f"{path}: top level must be a mapping")
    try:
        commands = [CommandSegment(
            t=float(c["t"]), mode=c.get("mode", "bimanual"),
            command_mode=c.get("command", "twist"),
            left=c.get("left", np.zeros(6)), right=c.get("right", np.zeros(6)),
        ) for c in cfg.get("commands", [])]
        noise = cfg.get("sensor_noise", {}) or {}
        scenario = Scenario(
            name=cfg.get("name", path.stem),
            model_path=str(cfg["model"]),
            duration=float(cfg["duration"]),
            dt=float(cfg.get("dt", 1e-3)),
            q_start=cfg["q_start"],
            commands=commands,
            adaptation_enabled=bool(cfg.get("adaptation", True)),
            fidelity=cfg.get("fidelity", "quasi-static"),
            seed=int(cfg.get("seed", 0)),
            sensor_noise_force=float(noise.get("force", 0.0)),
            sensor_noise_torque=float(noise.get("torque", 0.0)),
            tau_max_override=cfg.get("tau_max_override", {}) or {},
            retarget_overrides=cfg.get("retarget", {}) or {},
            object_cfg=cfg.get("object"),
            assertions=cfg.get("assertions", {}) or {},
        )
    except KeyError as e:
        raise ScenarioError(f"{path}: missing required key {e}") from None
    except (TypeError, ValueError) as e:
        raise ScenarioError(f"{path}: {e}") from None
    # model path is relative to the scenario file
    model = Path(scenario.model_path)
    if not model.is_absolute():
        scenario.model_path = str(path.parent / model)
    return scenario


# ---------------------------------------------------------------------------
# operator command generation


def _offset_pose(base: Pose, delta: np.ndarray) -> Pose:
    """base advanced by a world (angular; linear) displacement."""
    w = delta[:3]
    angle = float(np.linalg.norm(w))
    R = base.rotation if angle == 0.0 else \
        axis_angle_rotation(w / angle, angle) @ base.rotation
    return Pose(R, base.translation + delta[3:])


class OperatorStream:
    """Replays a scenario command stream into object target poses.

    Pose mode offsets the reference rest pose by the raw input; twist mode
    accumulates input * dt onto the previous reference, which keeps the
    target continuous across mode switches.
    """

    def __init__(self, commands: list, rest_pose: Pose):
        self.commands = commands
        self.rest = rest_pose
        self.ref = rest_pose
        self._idx = -1

    def _segment(self, t: float) -> Optional[CommandSegment]:
        while (self._idx + 1 < len(self.commands)
               and self.commands[self._idx + 1].t <= t):
            self._idx += 1
            seg = self.commands[self._idx]
            if seg.command_mode == "pose":
                # re-anchor so the first pose offset of the segment applies
                # to the reference at the switch instant: the stream stays
                # continuous across twist -> pose transitions
                self.rest = self.ref
        if self._idx < 0:
            return None
        return self.commands[self._idx]

    @staticmethod
    def _input(seg: CommandSegment) -> np.ndarray:
        # bimanual: the left 6-vector commands the object, right is ignored;
        # independent: both operator hands steer the held object, averaged
        if seg.mode == "independent":
            return 0.5 * (seg.left + seg.right)
        return seg.left

    def object_target(self, t: float, dt: float) -> Pose:
        seg = self._segment(t)
        if seg is None:
            return self.ref
        if seg.command_mode == "pose":
            self.ref = _offset_pose(self.rest, self._input(seg))
        else:
            self.ref = _offset_pose(self.ref, self._input(seg) * dt)
        return self.ref


def operator_command(commands: list, t: float, rest_pose: Pose,
                     prev_ref: Pose, dt: float) -> Pose:
    """Single-shot form of the stream replay: the reference produced at time
    t given the previous reference (twist mode accumulates, pose mode offsets
    the rest pose).
    """
    seg = None
    for c in commands:
        if c.t <= t:
            seg = c
        else:
            break
    if seg is None:
        return prev_ref
    if seg.command_mode == "pose":
        return _offset_pose(rest_pose, OperatorStream._input(seg))
    return _offset_pose(prev_ref, OperatorStream._input(seg) * dt)


# ---------------------------------------------------------------------------
# oracles


def slippage_margin(wrench: np.ndarray, obj: rb.ObjectModel) -> float:
    """Minimum of the friction-cone, CoP-rectangle and torsional margins of a
    contact wrench (contact frame); negative means the contact is slipping.
    """
    w = np.asarray(wrench, dtype=float).reshape(6)
    tau, f = w[:3], w[3:]
    f_z = f[2]
    margins = [
        obj.friction_mu * f_z - float(np.hypot(f[0], f[1])),
        obj.contact_halfwidths[1] * f_z - abs(tau[0]),
        obj.contact_halfwidths[0] * f_z - abs(tau[1]),
        obj.torsional_mu * f_z - abs(tau[2]),
    ]
    return float(min(margins))


def cop_margin(wrench: np.ndarray, obj: rb.ObjectModel) -> float:
    """Center-of-pressure rectangle margin only."""
    w = np.asarray(wrench, dtype=float).reshape(6)
    return float(min(obj.contact_halfwidths[1] * w[5] - abs(w[0]),
                     obj.contact_halfwidths[0] * w[5] - abs(w[1])))


# ---------------------------------------------------------------------------
# plant


@dataclass
class SimState:
    q: np.ndarray
    dq: np.ndarray
    X_O: Pose
    lambda_L: np.ndarray   # measured on-hand contact wrench, left contact frame
    lambda_R: np.ndarray
    time: float = 0.0


class PlantDivergence(Exception):
    """The contact springs failed to settle (grossly infeasible torques)."""


class QuasiStaticPlant:
    """Measured-side model: arms + object coupled by stiff 6-D grasp springs.

    Each step relaxes (q, X_O) toward the static equilibrium consistent with
    the commanded torques via a damped Newton flow. The damping term makes
    the flow well-posed along the arms' spring-free null directions and
    vanishes at the fixed point, so converged states satisfy exact wrench
    balance.
    """

    K_ROT = 1.0e3    # N*m/rad grasp spring, rotational
    K_LIN = 1.0e5    # N/m grasp spring, translational
    DAMPING = 1.0    # N*m*s/rad joint-space, N*s/m object, viscous

    def __init__(self, dual: rb.DualArmModel, obj: rb.ObjectModel,
                 q0: np.ndarray, X_O0: Optional[Pose] = None,
                 noise_force: float = 0.0, noise_torque: float = 0.0,
                 seed: int = 0, inner_steps: int = 4):
        self.dual = dual
        self.obj = obj
        self.q = np.asarray(q0, dtype=float).reshape(14).copy()
        self.X_O = X_O0 or rt.object_pose(dual, obj, self.q, via="left")
        self.noise = (noise_torque, noise_force)
        self.rng = np.random.default_rng(seed)
        self.inner_steps = inner_steps
        self._K = np.concatenate([np.full(3, self.K_ROT),
                                  np.full(3, self.K_LIN)])
        self._grasps = (obj.grasp_L, obj.grasp_R)
        self._w = [np.zeros(6), np.zeros(6)]    # world on-hand spring wrenches

    # -- internals ---------------------------------------------------------

    def _springs(self, frames, X_O: Pose):
        """Per-hand world spring wrench on the hand and lever arm r_c."""
        out = []
        for k, (J, G, R, p) in enumerate(frames):
            grasp = self._grasps[k]
            target = X_O @ grasp
            e = pose_error(Pose(R, p), target)
            w = self._K * e                     # on-hand wrench, world frame
            r_c = target.translation - X_O.translation
            out.append((w, r_c))
        return out

    def _residual(self, tau_cmd, frames, X_O: Pose):
        """20-vector [joint balance (14); object torque (3); force (3)]."""
        r = np.empty(20)
        springs = self._springs(frames, X_O)
        for k, (sl, (J, G, R, p)) in enumerate(
                ((slice(0, 7), frames[0]), (slice(7, 14), frames[1]))):
            w, _ = springs[k]
            r[sl] = tau_cmd[sl] - G + J.T @ w
        # net wrench ON the object: spring reactions are -w, gravity -mg z.
        # This orientation makes the residual the negative potential gradient,
        # so the damped flow is stable.
        r_ang = np.zeros(3)
        r_lin = np.array([0.0, 0.0, -self.obj.mass * rb.GRAVITY])
        for w, r_c in springs:
            r_ang -= w[:3] + np.cross(r_c, w[3:])
            r_lin -= w[3:]
        r[14:17] = r_ang
        r[17:20] = r_lin
        return r, springs

    def _jacobian(self, frames, springs, with_gravity: bool = False):
        """Spring-dominated approximation of d residual / d (q, object twist).

        Exactness is not required: the residual is exact, so the fixed point
        is exact; this only sets the relaxation direction. with_gravity adds
        the configuration dependence of gravity and of the Jacobian-mapped
        spring load, which the arms' spring-null directions need for the
        full Newton settle.
        """
        Jm = np.zeros((20, 20))
        if with_gravity:
            lams = []
            for k, (w, _) in enumerate(springs):
                R = frames[k][2]
                lams.append(np.concatenate([R.T @ w[:3], R.T @ w[3:]]))
            Jm[:14, :14] -= rt.torque_jacobian_q(self.dual, self.q,
                                                 lams[0], lams[1])
        for k, (sl, (J, G, R, p)) in enumerate(
                ((slice(0, 7), frames[0]), (slice(7, 14), frames[1]))):
            w, r_c = springs[k]
            KJ = self._K[:, None] * J           # d w / d q = -K J
            # T maps an object twist (about O) to grasp-frame displacement
            T = np.zeros((6, 6))
            T[:3, :3] = np.eye(3)
            T[3:, 3:] = np.eye(3)
            T[3:, :3] = -skew(r_c)
            KT = self._K[:, None] * T           # d w / d twist = +K T
            M = np.zeros((6, 6))                # object wrench rows of w
            M[:3, :3] = np.eye(3)
            M[:3, 3:] = skew(r_c)
            M[3:, 3:] = np.eye(3)
            Jm[sl, sl] += -J.T @ KJ
            Jm[sl, 14:] += J.T @ KT
            Jm[14:, sl] += M @ KJ
            Jm[14:, 14:] += -M @ KT
        return Jm

    @staticmethod
    def _offset_object(X: Pose, twist: np.ndarray) -> Pose:
        w = twist[:3]
        angle = float(np.linalg.norm(w))
        R = X.rotation if angle == 0.0 else \
            axis_angle_rotation(w / angle, angle) @ X.rotation
        return Pose(R, X.translation + twist[3:])

    def _advance_object(self, twist: np.ndarray) -> None:
        self.X_O = self._offset_object(self.X_O, twist)

    def _measured(self, frames) -> tuple:
        springs = self._springs(frames, self.X_O)
        lams = []
        for k, (w, _) in enumerate(springs):
            R = frames[k][2]
            lam = np.concatenate([R.T @ w[:3], R.T @ w[3:]])
            if self.noise[0] > 0 or self.noise[1] > 0:
                lam[:3] += self.rng.uniform(-self.noise[0], self.noise[0], 3)
                lam[3:] += self.rng.uniform(-self.noise[1], self.noise[1], 3)
            lams.append(lam)
        return tuple(lams)

    # -- public API --------------------------------------------------------

    def _fd_jacobian(self, tau_cmd: np.ndarray, r0: np.ndarray,
                     h: float = 1e-7) -> np.ndarray:
        """Forward-difference residual Jacobian; the analytic approximation
        drops curvature terms too large for a full-accuracy settle.
        """
        Jm = np.empty((20, 20))
        q0 = self.q
        for i in range(20):
            du = np.zeros(20)
            du[i] = h
            self.q = q0 + du[:14]
            X = self._offset_object(self.X_O, du[14:])
            frames = rt.dual_frames_single(self.dual, self.q)
            r, _ = self._residual(tau_cmd, frames, X)
            Jm[:, i] = (r - r0) / h
        self.q = q0
        return Jm

    def settle(self, tau_cmd: np.ndarray, iterations: int = 200,
               tol: float = 1e-5) -> None:
        """Levenberg-Marquardt settle to static equilibrium.

        Plain Newton is unreliable here: each arm has a spring-null direction
        governed only by the (possibly destabilizing) gravity derivative, so
        the system matrix is nearly singular. LM damping handles it.
        """
        tau_cmd = np.asarray(tau_cmd, dtype=float).reshape(14)
        mu = 1e-2
        frames = rt.dual_frames_single(self.dual, self.q)
        r, springs = self._residual(tau_cmd, frames, self.X_O)
        for _ in range(iterations):
            if np.max(np.abs(r)) <= tol:
                self._w = [s[0] for s in springs]
                return
            Jm = self._fd_jacobian(tau_cmd, r)
            scale = np.maximum(np.linalg.norm(Jm, axis=0), 1.0)
            norm = float(r @ r)
            rhs = np.concatenate([-r, np.zeros(20)])
            for _ in range(30):
                # augmented least-squares form of the LM step: solving
                # [J; sqrt(mu) S] du ~= [-r; 0] avoids forming J^T J, whose
                # squared conditioning defeats double precision here
                A = np.vstack([Jm, np.sqrt(mu) * np.diag(scale)])
                du = np.linalg.lstsq(A, rhs, rcond=None)[0]
                step = np.max(np.abs(du))
                if step > 0.05:
                    du *= 0.05 / step
                q_try = self.q + du[:14]
                X_try = self._offset_object(self.X_O, du[14:])
                frames_try = rt.dual_frames_single(self.dual, q_try)
                r_try, springs_try = self._residual(tau_cmd, frames_try, X_try)
                if float(r_try @ r_try) < norm:
                    self.q, self.X_O = q_try, X_try
                    frames, r, springs = frames_try, r_try, springs_try
                    mu = max(mu / 3.0, 1e-10)
                    break
                mu *= 10.0
            else:
                break
        if np.max(np.abs(r)) > tol:
            raise PlantDivergence(
                f"plant failed to settle: residual {np.max(np.abs(r)):.3e}")
        self._w = [s[0] for s in springs]

    def step(self, tau_cmd: np.ndarray, dt: float) -> SimState:
        """One control period of the damped quasi-static flow."""
        tau_cmd = np.asarray(tau_cmd, dtype=float).reshape(14)
        if not np.all(np.isfinite(tau_cmd)):
            raise PlantDivergence("non-finite torque command")
        h = dt / self.inner_steps
        frames = None
        for _ in range(self.inner_steps):
            frames = rt.dual_frames_single(self.dual, self.q)
            r, springs = self._residual(tau_cmd, frames, self.X_O)
            Jm = self._jacobian(frames, springs)
            # backward-Euler viscous term: well-posed in the null directions
            Jm[np.diag_indices(20)] -= self.DAMPING / h
            du = np.linalg.solve(Jm, -r)
            if not np.all(np.isfinite(du)) or np.max(np.abs(du)) > 0.5:
                raise PlantDivergence("plant integration diverged")
            self.q += du[:14]
            self._advance_object(du[14:])
        frames = rt.dual_frames_single(self.dual, self.q)
        lam_L, lam_R = self._measured(frames)
        self._frames = frames
        return SimState(q=self.q.copy(), dq=np.zeros(14), X_O=self.X_O,
                        lambda_L=lam_L, lambda_R=lam_R)

    @property
    def frames(self):
        return self._frames


# ---------------------------------------------------------------------------
# scenario replay


@dataclass
class LogRecord:
    time: float
    commanded: Pose
    adapted: Pose
    measured: Pose
    tau: np.ndarray
    tau_limit: np.ndarray
    lambda_L: np.ndarray
    lambda_R: np.ndarray
    friction_margin: float
    cop_margin: float
    torque_violation: bool
    slippage: bool
    crash: bool
    clamped: bool
    qp_status: str
    compute_us: float


CSV_HEADER = (
    "time,cmd_qw,cmd_qx,cmd_qy,cmd_qz,cmd_x,cmd_y,cmd_z,"
    "adp_qw,adp_qx,adp_qy,adp_qz,adp_x,adp_y,adp_z,"
    "meas_qw,meas_qx,meas_qy,meas_qz,meas_x,meas_y,meas_z,"
    + ",".join(f"tau_{i}" for i in range(14)) + ","
    + ",".join(f"tau_limit_{i}" for i in range(14)) + ","
    + ",".join(f"lamL_{i}" for i in range(6)) + ","
    + ",".join(f"lamR_{i}" for i in range(6)) + ","
    "friction_margin,cop_margin,"
    "torque_violation,slippage,crash,clamped,qp_status,compute_us"
)


def record_to_row(rec: LogRecord) -> str:
    def pose_cols(p: Pose):
        qu = rotation_to_quaternion(p.rotation)
        return list(qu) + list(p.translation)

    vals = ([rec.time] + pose_cols(rec.commanded) + pose_cols(rec.adapted)
            + pose_cols(rec.measured) + list(rec.tau) + list(rec.tau_limit)
            + list(rec.lambda_L) + list(rec.lambda_R)
            + [rec.friction_margin, rec.cop_margin])
    flags = [int(rec.torque_violation), int(rec.slippage), int(rec.crash),
             int(rec.clamped)]
    return (",".join(f"{v:.10g}" for v in vals) + ","
            + ",".join(str(f) for f in flags)
            + f",{rec.qp_status},{rec.compute_us:.3f}")


def write_log_csv(records: list, path) -> None:
    with open(path, "w") as fh:
        fh.write(CSV_HEADER + "\n")
        for rec in records:
            fh.write(record_to_row(rec) + "\n")


class Pipeline:
    """The per-cycle control stack shared by scenario replay, the benchmark
    harness and the live bridge: operator target in, joint torques out.
    """

    def __init__(self, dual: rb.DualArmModel, obj: rb.ObjectModel,
                 scenario: Scenario):
        self.dual = dual
        self.obj = obj
        self.scenario = scenario
        self.tau_max = scenario.effective_tau_max(dual)
        cfg_kwargs = dict(scenario.retarget_overrides)
        cfg_kwargs.setdefault("dt", scenario.dt)
        cfg_kwargs.setdefault("nominal_q", scenario.q_start.copy())
        self.config = rt.RetargetConfig(**cfg_kwargs)
        self.state = rt.initialize(dual, obj, scenario.q_start, self.config)
        self.retargeter = rt.Retargeter(
            dual, obj, self.config,
            tau_limit=self.config.torque_ratio * self.tau_max)
        self.controller = ct.InteractionController(dual)
        self.adm_params = ad.AdmittanceParams(fold_damping=True)
        self.adm_state = ad.AdmittanceState()
        # Signal conditioning on the external-wrench estimate: soft deadband
        # absorbing the plant/sensor bias so only genuine interaction drives
        # the admittance integrator.
        self.wrench_deadband = np.array([0.3] * 3 + [0.5] * 3)
        frames = rt.dual_frames_single(dual, scenario.q_start)
        self.desired = rt.RetargetOutput(
            q_d=scenario.q_start.copy(),
            lambda_L_d=self.state.lambda_L.copy(),
            lambda_R_d=self.state.lambda_R.copy(),
            X_L_d=Pose(frames[0][2], frames[0][3]),
            X_R_d=Pose(frames[1][2], frames[1][3]),
            clamped=False, qp_status="optimal")
        self.adapted_pose = rt.object_pose(dual, obj, scenario.q_start,
                                           via="left")

    def cycle(self, commanded: Pose, sim: SimState,
              frames: Optional[tuple] = None) -> rt.RetargetOutput:
        """One control cycle: admittance -> retarget -> desired state."""
        scn = self.scenario
        rotations = None
        if frames is not None:
            rotations = (frames[0][2], frames[1][2])
        lam_ext = ad.estimate_external_wrench(
            sim.lambda_L, sim.lambda_R, sim.q, self.dual, self.obj,
            rotations=rotations)
        lam_ext = np.sign(lam_ext) * np.maximum(
            np.abs(lam_ext) - self.wrench_deadband, 0.0)
        self.adm_state = ad.admittance_step(
            self.adm_state, lam_ext, np.zeros(6), self.adm_params,
            scn.dt, commanded, self.adapted_pose)
        # admittance output composes as a pose offset in the object frame
        target = commanded @ self.adm_state.pose
        if scn.adaptation_enabled:
            self.state, self.desired = self.retargeter.step(self.state, target)
            # adapted object pose through the left grasp, from the already
            # computed desired hand pose
            self.adapted_pose = self.desired.X_L_d @ self.obj.grasp_L.inverse()
        else:
            # adaptation disabled: raw targets straight to the controller
            self.desired = rt.RetargetOutput(
                q_d=self.desired.q_d, lambda_L_d=self.desired.lambda_L_d,
                lambda_R_d=self.desired.lambda_R_d,
                X_L_d=target @ self.obj.grasp_L,
                X_R_d=target @ self.obj.grasp_R,
                clamped=False, qp_status="bypassed")
            self.adapted_pose = target
        return self.desired

    def torques(self, sim: SimState, frames: Optional[tuple] = None) -> np.ndarray:
        return self.controller.compute_torques(sim.q, sim.dq, self.desired,
                                               frames=frames)


def load_scenario_models(scenario: Scenario) -> tuple:
    """(DualArmModel, ObjectModel) for a scenario: the model file's pair,
    with the object replaced by the scenario's own object block if present.
    """
    dual, obj = rb.load_model(scenario.model_path)
    if scenario.object_cfg is not None:
        obj = rb._object_from_cfg(scenario.object_cfg)
    return dual, obj


def run_scenario(scenario: Scenario) -> list:
    """Replay a scenario; returns one LogRecord per control cycle."""
    dual, obj = load_scenario_models(scenario)
    pipeline = Pipeline(dual, obj, scenario)
    plant = QuasiStaticPlant(
        dual, obj, scenario.q_start,
        noise_force=scenario.sensor_noise_force,
        noise_torque=scenario.sensor_noise_torque,
        seed=scenario.seed)
    torque_ratio = pipeline.config.torque_ratio
    tau_limit = torque_ratio * pipeline.tau_max

    # settle the plant against the initial torque command before streaming
    sim = SimState(q=plant.q.copy(), dq=np.zeros(14), X_O=plant.X_O,
                   lambda_L=pipeline.state.lambda_L.copy(),
                   lambda_R=pipeline.state.lambda_R.copy())
    plant.settle(pipeline.torques(sim))
    sim = plant.step(pipeline.torques(sim), scenario.dt)

    rest = rt.object_pose(dual, obj, scenario.q_start, via="left")
    stream = OperatorStream(scenario.commands, rest)
    n_cycles = int(round(scenario.duration / scenario.dt))
    records = []
    for k in range(n_cycles):
        t = k * scenario.dt
        t0 = time.perf_counter()
        commanded = stream.object_target(t, scenario.dt)
        desired = pipeline.cycle(commanded, sim, frames=plant.frames)
        tau = pipeline.torques(sim, frames=plant.frames)
        compute_us = (time.perf_counter() - t0) * 1e6
        crash = False
        try:
            sim = plant.step(tau, scenario.dt)
        except PlantDivergence:
            crash = True
        margin = min(slippage_margin(sim.lambda_L, obj),
                     slippage_margin(sim.lambda_R, obj))
        cop = min(cop_margin(sim.lambda_L, obj), cop_margin(sim.lambda_R, obj))
        records.append(LogRecord(
            time=t,
            commanded=commanded,
            adapted=pipeline.adapted_pose,
            measured=sim.X_O,
            tau=tau.copy(),
            tau_limit=tau_limit.copy(),
            lambda_L=sim.lambda_L.copy(),
            lambda_R=sim.lambda_R.copy(),
            friction_margin=margin,
            cop_margin=cop,
            torque_violation=bool(np.any(np.abs(tau) > tau_limit)),
            slippage=margin < 0.0,
            crash=crash,
            clamped=desired.clamped,
            qp_status=desired.qp_status,
            compute_us=compute_us,
        ))
        if crash:
            break
    return records


# ---------------------------------------------------------------------------
# embedded scenario assertions


def evaluate_assertions(scenario: Scenario, records: list) -> list:
    """Evaluate the scenario's embedded acceptance assertions.

    Returns a list of (name, passed, message) tuples.
    """
    results = []
    A = scenario.assertions

    if "max_torque_ratio_violations" in A:
        limit = int(A["max_torque_ratio_violations"])
        count = sum(r.torque_violation for r in records)
        results.append(("torque_violations", count <= limit,
                        f"{count} violation cycles (allowed {limit})"))
    if "min_flags" in A:
        want = int(A["min_flags"])
        count = sum(r.torque_violation or r.slippage or r.crash
                    for r in records)
        results.append(("baseline_flags", count >= want,
                        f"{count} flagged cycles (expected >= {want})"))
    if "min_friction_margin" in A:
        least = min(r.friction_margin for r in records)
        bound = float(A["min_friction_margin"])
        results.append(("friction_margin", least >= bound,
                        f"min margin {least:.4f} (bound {bound})"))
    if "plateau" in A:
        spec = A["plateau"]
        lo, hi = float(spec["window"][0]), float(spec["window"][1])
        name = spec.get("axis", "x")
        R0 = records[0].adapted.rotation
        if name in ("roll", "pitch", "yaw"):
            axis = ("roll", "pitch", "yaw").index(name)
            window = [rotation_log(r.adapted.rotation @ R0.T)[axis]
                      for r in records if lo <= r.time <= hi]
            unit = "mrad"
        else:
            axis = {"x": 0, "y": 1, "z": 2}[name]
            window = [r.adapted.translation[axis] for r in records
                      if lo <= r.time <= hi]
            unit = "mm"
        var = max(window) - min(window) if window else float("inf")
        bound = float(spec["max_variation"])
        results.append(("plateau", var <= bound,
                        f"{name} variation {var * 1e3:.3f} {unit} over "
                        f"[{lo},{hi}] s (bound {bound * 1e3:.1f} {unit})"))
    if "tracks_command" in A:
        bound = float(A["tracks_command"])
        worst = max(float(np.linalg.norm(
            r.adapted.translation - r.commanded.translation))
            for r in records)
        results.append(("tracks_command", worst <= bound,
                        f"max |adapted - commanded| {worst:.5f} m "
                        f"(bound {bound})"))
    return results
