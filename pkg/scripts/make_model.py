"""Generate the bundled dual-arm model file (franka_like.yaml).

Builds two identical 7-DoF torque-controlled arms with modified-DH geometry
resembling a Franka Panda, facing each other across the workspace, and writes
the model to src/bimanual/data/franka_like.yaml. Object/grasp definitions are
scenario-specific and live in the scenario generator instead.
"""

import pathlib
import sys

import numpy as np

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from bimanual.robot import ArmModel, DualArmModel, JointDef, ObjectModel, dump_model
from bimanual.spatial import Pose, rotation_x, rotation_z

# Modified-DH rows (alpha_{i-1}, a_{i-1}, d_i) plus flange offset.
DH_ALPHA = [0.0, -np.pi / 2, np.pi / 2, np.pi / 2, -np.pi / 2, np.pi / 2, np.pi / 2]
DH_A = [0.0, 0.0, 0.0, 0.0825, -0.0825, 0.0, 0.088]
DH_D = [0.333, 0.0, 0.316, 0.0, 0.384, 0.0, 0.0]
FLANGE = 0.107

Q_MIN = [-2.8973, -1.7628, -2.8973, -3.0718, -2.8973, -0.0175, -2.8973]
Q_MAX = [2.8973, 1.7628, 2.8973, -0.0698, 2.8973, 3.7525, 2.8973]
DQ_MAX = [2.175, 2.175, 2.175, 2.175, 2.61, 2.61, 2.61]
TAU_MAX = [87.0, 87.0, 87.0, 87.0, 12.0, 12.0, 12.0]

MASSES = [4.97, 0.65, 3.23, 3.59, 1.23, 1.67, 0.735]
COMS = [
    [0.0, -0.03, -0.08],
    [0.0, -0.07, 0.03],
    [0.03, 0.03, -0.07],
    [-0.05, 0.10, 0.03],
    [0.0, 0.03, -0.12],
    [0.06, 0.01, 0.01],
    [0.01, 0.01, 0.08],
]
INERTIAS = [
    [0.07, 0.07, 0.01],
    [0.03, 0.01, 0.03],
    [0.04, 0.04, 0.01],
    [0.03, 0.01, 0.03],
    [0.03, 0.03, 0.01],
    [0.005, 0.005, 0.005],
    [0.003, 0.003, 0.004],
]

RIGHT_BASE_Y = 1.10


def build_arm(base_pose: Pose) -> ArmModel:
    joints = []
    for i in range(7):
        R = rotation_x(DH_ALPHA[i])
        t = np.array([DH_A[i], 0.0, 0.0]) + R @ np.array([0.0, 0.0, DH_D[i]])
        joints.append(JointDef(
            axis=np.array([0.0, 0.0, 1.0]),
            parent_offset=Pose(R, t),
            q_min=Q_MIN[i], q_max=Q_MAX[i],
            dq_max=DQ_MAX[i], tau_max=TAU_MAX[i],
            link_mass=MASSES[i],
            link_com=np.array(COMS[i], dtype=float),
            link_inertia=np.diag(INERTIAS[i]).astype(float),
        ))
    return ArmModel(joints=tuple(joints), base_pose=base_pose,
                    end_effector_offset=Pose(np.eye(3), np.array([0.0, 0.0, FLANGE])))


def build_dual() -> DualArmModel:
    left = build_arm(Pose.identity())
    right = build_arm(Pose(rotation_z(np.pi), np.array([0.0, RIGHT_BASE_Y, 0.0])))
    return DualArmModel(left=left, right=right)


OBJ_CENTER = np.array([0.5, 0.55, 0.4])
GRASP_HALF_SPAN = 0.10   # m, hands grip the box faces at y = center +- span


def grasp_targets():
    """World poses of the two contact frames: z axes are the outward box
    surface normals (left face -y, right face +y)."""
    R_L = np.array([[1.0, 0, 0], [0, 0, -1.0], [0, 1.0, 0]])   # z = -y_world
    R_R = np.array([[1.0, 0, 0], [0, 0, 1.0], [0, -1.0, 0]])   # z = +y_world
    X_L = Pose(R_L, OBJ_CENTER + np.array([0.0, -GRASP_HALF_SPAN, 0.0]))
    X_R = Pose(R_R, OBJ_CENTER + np.array([0.0, GRASP_HALF_SPAN, 0.0]))
    return X_L, X_R


def build_object(dual: DualArmModel, qL, qR) -> ObjectModel:
    from bimanual.robot import forward_kinematics
    X_O = Pose(np.eye(3), OBJ_CENTER)
    return ObjectModel(
        mass=2.0,
        grasp_L=X_O.inverse() @ forward_kinematics(dual.left, qL),
        grasp_R=X_O.inverse() @ forward_kinematics(dual.right, qR),
        friction_mu=0.5,
        contact_halfwidths=np.array([0.04, 0.04]),
        torsional_mu=0.01,
        f_normal_min=2.0,
        f_normal_max=60.0,
    )


def solve_q_start(dual: DualArmModel):
    from _ik import solve_ik
    X_L, X_R = grasp_targets()
    seed = np.array([0.0, -0.5, 0.0, -1.8, 0.0, 1.6, 0.6])
    qL = solve_ik(dual.left, X_L, seed)
    qR = solve_ik(dual.right, X_R, seed)
    return qL, qR


def main():
    dual = build_dual()
    qL, qR = solve_q_start(dual)
    obj = build_object(dual, qL, qR)
    out = pathlib.Path(__file__).resolve().parents[1] / "src/bimanual/data/franka_like.yaml"
    dump_model(dual, obj, out)
    print(f"wrote {out}")
    print("q_start:", np.round(np.concatenate([qL, qR]), 8).tolist())


if __name__ == "__main__":
    main()
