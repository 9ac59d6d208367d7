"""Damped-least-squares IK helper for the offline scenario generators."""

import numpy as np

from bimanual.robot import ArmModel, forward_kinematics, jacobian_world
from bimanual.spatial import Pose, pose_error


def solve_ik(arm: ArmModel, target: Pose, q0: np.ndarray,
             iters: int = 400, damping: float = 1e-4,
             posture_gain: float = 0.05, restarts: int = 20,
             seed: int = 7) -> np.ndarray:
    """DLS with joint-limit clamping; random restarts if the seed stalls."""
    rng = np.random.default_rng(seed)
    q_min, q_max, _, _ = arm.limits()
    last = None
    for attempt in range(1 + restarts):
        start = np.asarray(q0, dtype=float) if attempt == 0 else \
            rng.uniform(q_min + 0.1, q_max - 0.1)
        try:
            return _solve_once(arm, target, start, iters, damping, posture_gain)
        except RuntimeError as e:
            last = e
    raise last


def _solve_once(arm: ArmModel, target: Pose, q0: np.ndarray,
                iters: int, damping: float, posture_gain: float) -> np.ndarray:
    q_min, q_max, _, _ = arm.limits()
    q_mid = 0.5 * (q_min + q_max)
    q = np.asarray(q0, dtype=float).copy()
    for _ in range(iters):
        e = pose_error(forward_kinematics(arm, q), target)
        if np.linalg.norm(e) < 1e-12:
            break
        J = jacobian_world(arm, q)
        dq = J.T @ np.linalg.solve(J @ J.T + damping * np.eye(6), e)
        # Null-space pull toward mid-range keeps the solution off the stops.
        N = np.eye(7) - np.linalg.pinv(J) @ J
        dq += posture_gain * (N @ (q_mid - q))
        step = np.linalg.norm(dq)
        if step > 0.2:
            dq *= 0.2 / step
        q = np.clip(q + dq, q_min + 0.02, q_max - 0.02)
    err = pose_error(forward_kinematics(arm, q), target)
    if np.linalg.norm(err) > 1e-9:
        raise RuntimeError(f"IK did not converge: |err| = {np.linalg.norm(err):.3e}")
    return q
