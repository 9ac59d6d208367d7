"""Compiled inner kernels for the per-cycle kinematics batch.

Optional: importing this module requires numba. Callers fall back to the
vectorized numpy implementations when it is unavailable.
"""

import numpy as np
from numba import njit

GRAVITY = 9.81


@njit(cache=True, fastmath=False)
def cycle_rows(J_bL, G_bL, R_bL, p_L, J_bR, G_bR, R_bR, p_R,
               lamL, lamR, gLR, gLt, gRR, gRt, wtL, wtR, fz, h):
    """Fused per-cycle row assembly for the retargeting QP (hot path).

    Inputs are the two arms' perturbation-batched frames (see ArmFrames), the
    current contact wrenches, the grasp rotations/translations, the grasp
    wrench transforms, the object gravity force fz = -m g and the FD step h.

    Returns:
      tau (14,)      quasi-static joint torques
      D (14, 26)     d tau / d (q, lambda_L, lambda_R)
      res (6,)       object equilibrium residual
      Jeq (6, 26)    equilibrium jacobian
      Ac (6, 26)     grasp-coupling rows (A dx + bc = 0)
      Rrel (3, 3)    R_oR @ R_oL^T for the coupling orientation drift
      bc_lin (3,)    t_oR - t_oL coupling translation drift
      J_objL (6, 7)  left-hand object-frame task jacobian
      R_oL (3, 3)    object rotation through the left grasp
      t_oL (3,)      object origin through the left grasp
    """
    tau = np.zeros(14)
    D = np.zeros((14, 26))
    res = np.zeros(6)
    Jeq = np.zeros((6, 26))
    Ac = np.zeros((6, 26))
    taub = np.empty((8, 7))
    w = np.empty(6)
    R_o = np.empty((2, 3, 3))
    t_o = np.empty((2, 3))
    J_objL = np.empty((6, 7))

    for arm in range(2):
        if arm == 0:
            J_b, G_b, R_b, p_ee = J_bL, G_bL, R_bL, p_L
            lam, gR, gt = lamL, gLR, gLt
        else:
            J_b, G_b, R_b, p_ee = J_bR, G_bR, R_bR, p_R
            lam, gR, gt = lamR, gRR, gRt
        qoff = 7 * arm
        col = 14 + 6 * arm

        # torque rows: tau_b = G_b - J_b^T (R_b lam), then one-sided FD
        for b in range(8):
            for i in range(3):
                s1 = 0.0
                s2 = 0.0
                for j in range(3):
                    s1 += R_b[b, i, j] * lam[j]
                    s2 += R_b[b, i, j] * lam[3 + j]
                w[i] = s1
                w[3 + i] = s2
            for j in range(7):
                s = G_b[b, j]
                for i in range(6):
                    s -= J_b[b, i, j] * w[i]
                taub[b, j] = s
        for j in range(7):
            tau[qoff + j] = taub[0, j]
            for k in range(7):
                D[qoff + j, qoff + k] = (taub[1 + k, j] - taub[0, j]) / h
            # d tau / d lam = -J^T blkdiag(R0, R0)
            for c in range(3):
                s1 = 0.0
                s2 = 0.0
                for i in range(3):
                    s1 += J_b[0, i, j] * R_b[0, i, c]
                    s2 += J_b[0, 3 + i, j] * R_b[0, i, c]
                D[qoff + j, col + c] = -s1
                D[qoff + j, col + 3 + c] = -s2

        # equilibrium residual / jacobian, gravity part through this hand:
        # f_local = R0^T (0, 0, fz), res[3:] += 0.5 gR f_local,
        # Jeq[3:, q] = 0.5 gR S(f_local) (R0^T J_b[0, :3])
        fl0 = fz * R_b[0, 2, 0]
        fl1 = fz * R_b[0, 2, 1]
        fl2 = fz * R_b[0, 2, 2]
        for i in range(3):
            res[3 + i] += 0.5 * (gR[i, 0] * fl0 + gR[i, 1] * fl1
                                 + gR[i, 2] * fl2)
        for j in range(7):
            # jr = R0^T J_b[0, :3, j]
            jr0 = R_b[0, 0, 0] * J_b[0, 0, j] + R_b[0, 1, 0] * J_b[0, 1, j] \
                + R_b[0, 2, 0] * J_b[0, 2, j]
            jr1 = R_b[0, 0, 1] * J_b[0, 0, j] + R_b[0, 1, 1] * J_b[0, 1, j] \
                + R_b[0, 2, 1] * J_b[0, 2, j]
            jr2 = R_b[0, 0, 2] * J_b[0, 0, j] + R_b[0, 1, 2] * J_b[0, 1, j] \
                + R_b[0, 2, 2] * J_b[0, 2, j]
            # s = S(f_local) jr
            s0 = fl1 * jr2 - fl2 * jr1
            s1 = fl2 * jr0 - fl0 * jr2
            s2 = fl0 * jr1 - fl1 * jr0
            for i in range(3):
                Jeq[3 + i, qoff + j] = 0.5 * (gR[i, 0] * s0 + gR[i, 1] * s1
                                              + gR[i, 2] * s2)
        wt = wtL if arm == 0 else wtR
        for i in range(6):
            s = 0.0
            for j in range(6):
                s += wt[i, j] * lam[j]
                Jeq[i, col + j] = -wt[i, j]
            res[i] -= s

        # object frame through this hand's grasp
        for i in range(3):
            for j in range(3):
                s = 0.0
                for l in range(3):
                    s += R_b[0, i, l] * gR[j, l]    # R0 @ gR^T
                R_o[arm, i, j] = s
        r0 = -(R_o[arm, 0, 0] * gt[0] + R_o[arm, 0, 1] * gt[1]
               + R_o[arm, 0, 2] * gt[2])
        r1 = -(R_o[arm, 1, 0] * gt[0] + R_o[arm, 1, 1] * gt[1]
               + R_o[arm, 1, 2] * gt[2])
        r2 = -(R_o[arm, 2, 0] * gt[0] + R_o[arm, 2, 1] * gt[1]
               + R_o[arm, 2, 2] * gt[2])
        t_o[arm, 0] = p_ee[0] + r0
        t_o[arm, 1] = p_ee[1] + r1
        t_o[arm, 2] = p_ee[2] + r2
        # J_obj = J_ee with the linear rows shifted by the lever arm r
        sgn = -1.0 if arm == 0 else 1.0
        for j in range(7):
            a0 = J_b[0, 0, j]
            a1 = J_b[0, 1, j]
            a2 = J_b[0, 2, j]
            v0 = J_b[0, 3, j] - (r1 * a2 - r2 * a1)
            v1 = J_b[0, 4, j] - (r2 * a0 - r0 * a2)
            v2 = J_b[0, 5, j] - (r0 * a1 - r1 * a0)
            Ac[0, qoff + j] = sgn * a0
            Ac[1, qoff + j] = sgn * a1
            Ac[2, qoff + j] = sgn * a2
            Ac[3, qoff + j] = sgn * v0
            Ac[4, qoff + j] = sgn * v1
            Ac[5, qoff + j] = sgn * v2
            if arm == 0:
                J_objL[0, j] = a0
                J_objL[1, j] = a1
                J_objL[2, j] = a2
                J_objL[3, j] = v0
                J_objL[4, j] = v1
                J_objL[5, j] = v2

    Rrel = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            s = 0.0
            for l in range(3):
                s += R_o[1, i, l] * R_o[0, j, l]    # R_oR @ R_oL^T
            Rrel[i, j] = s
    bc_lin = np.empty(3)
    for i in range(3):
        bc_lin[i] = t_o[1, i] - t_o[0, i]
    R_oL = np.empty((3, 3))
    t_oL = np.empty(3)
    for i in range(3):
        t_oL[i] = t_o[0, i]
        for j in range(3):
            R_oL[i, j] = R_o[0, i, j]
    return tau, D, res, Jeq, Ac, Rrel, bc_lin, J_objL, R_oL, t_oL


@njit(cache=True, fastmath=False)
def frames_batch(axes, K, KK, off_R, off_t, masses, coms, ee_R, ee_t,
                 base_R, base_p, Q):
    """World jacobians, gravity torques and end-effector frames for a batch
    of 7-joint configurations. Returns (J, G, R_ee, p_ee) with shapes
    (B, 6, 7), (B, 7), (B, 3, 3), (B, 3).
    """
    B = Q.shape[0]
    J = np.empty((B, 6, 7))
    G = np.empty((B, 7))
    R_ee = np.empty((B, 3, 3))
    p_ee = np.empty((B, 3))
    Rj = np.empty((3, 3))
    R_tmp = np.empty((3, 3))
    R_cur = np.empty((3, 3))
    p_cur = np.empty(3)
    p_all = np.empty((7, 3))
    z_all = np.empty((7, 3))
    c_all = np.empty((7, 3))
    lever = np.empty(3)

    for b in range(B):
        for i in range(3):
            p_cur[i] = base_p[b, i]
            for j in range(3):
                R_cur[i, j] = base_R[b, i, j]
        for k in range(7):
            # p_cur += R_cur @ off_t[k]
            for i in range(3):
                s = 0.0
                for j in range(3):
                    s += R_cur[i, j] * off_t[k, j]
                p_all[k, i] = p_cur[i] + s
            for i in range(3):
                p_cur[i] = p_all[k, i]
            # R_cur = R_cur @ off_R[k] @ (I + sin K + (1-cos) K K)
            cq = np.cos(Q[b, k])
            sq = np.sin(Q[b, k])
            for i in range(3):
                for j in range(3):
                    Rj[i, j] = sq * K[k, i, j] + (1.0 - cq) * KK[k, i, j]
                Rj[i, i] += 1.0
            for i in range(3):
                for j in range(3):
                    s = 0.0
                    for l in range(3):
                        s += R_cur[i, l] * off_R[k, l, j]
                    R_tmp[i, j] = s
            for i in range(3):
                for j in range(3):
                    s = 0.0
                    for l in range(3):
                        s += R_tmp[i, l] * Rj[l, j]
                    R_cur[i, j] = s
            for i in range(3):
                zs = 0.0
                cs = 0.0
                for j in range(3):
                    zs += R_cur[i, j] * axes[k, j]
                    cs += R_cur[i, j] * coms[k, j]
                z_all[k, i] = zs
                c_all[k, i] = p_cur[i] + cs
        # end-effector frame
        for i in range(3):
            s = 0.0
            for j in range(3):
                s += R_cur[i, j] * ee_t[j]
            p_ee[b, i] = p_cur[i] + s
            for j in range(3):
                s2 = 0.0
                for l in range(3):
                    s2 += R_cur[i, l] * ee_R[l, j]
                R_ee[b, i, j] = s2
        # jacobian columns: angular = z, linear = z x (p_ee - p_joint)
        for k in range(7):
            rx = p_ee[b, 0] - p_all[k, 0]
            ry = p_ee[b, 1] - p_all[k, 1]
            rz = p_ee[b, 2] - p_all[k, 2]
            zx, zy, zz = z_all[k, 0], z_all[k, 1], z_all[k, 2]
            J[b, 0, k] = zx
            J[b, 1, k] = zy
            J[b, 2, k] = zz
            J[b, 3, k] = zy * rz - zz * ry
            J[b, 4, k] = zz * rx - zx * rz
            J[b, 5, k] = zx * ry - zy * rx
        # gravity torques via suffix sums over distal links
        m_suf = 0.0
        lever[0] = 0.0
        lever[1] = 0.0
        for k in range(6, -1, -1):
            m_suf += masses[k]
            lever[0] += masses[k] * c_all[k, 0]
            lever[1] += masses[k] * c_all[k, 1]
            lx = lever[0] - m_suf * p_all[k, 0]
            ly = lever[1] - m_suf * p_all[k, 1]
            G[b, k] = GRAVITY * (z_all[k, 0] * ly - z_all[k, 1] * lx)
    return J, G, R_ee, p_ee
