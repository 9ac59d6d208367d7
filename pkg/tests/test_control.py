"""Interaction-controller tests: saturating PD, fractal-impedance energy
profile, episode bookkeeping, and torque assembly."""

import math

import numpy as np
import pytest
from scipy.integrate import quad

from bimanual import control as ct
from bimanual import retarget as rt
from bimanual import robot as rb
from bimanual.spatial import Pose

DEG = math.pi / 180.0


class TestPublishedParams:
    def test_table_verbatim(self):
        t = ct.table_params()
        cl = t["cart_lin"]
        assert (cl.pd.f, cl.pd.d, cl.pd.zeta) == (25.0, 0.08, 0.8)
        ca = t["cart_ang"]
        assert (ca.pd.f, ca.pd.zeta) == (2.0, 0.2)
        assert ca.pd.d == pytest.approx(8.0 * DEG)
        rl = t["rel_lin"]
        assert (rl.f, rl.d, rl.zeta) == (50.0, 0.05, 0.4)
        ra = t["rel_ang"]
        assert (ra.f, ra.zeta) == (5.0, 0.1)
        assert ra.d == pytest.approx(5.0 * DEG)
        j = t["joint"]
        assert (j.f, j.zeta) == (0.3, 0.0)
        assert j.d == pytest.approx(10.0 * DEG)

    def test_derived_gains(self):
        p = ct.PdParams(f=25.0, d=0.08, zeta=0.8)
        assert p.k_p == pytest.approx(312.5)
        assert p.k_d == pytest.approx(2 * 0.8 * math.sqrt(312.5))
        n = ct.NlpdParams(p, xi=0.9)
        assert n.e_max == 25.0
        assert n.e_0 == pytest.approx(0.9 * 312.5 * 0.08)
        assert n.alpha_b == pytest.approx(0.9 * 0.08)
        assert n.s == pytest.approx(0.1 * 0.08 / (2 * math.pi))

    def test_validation(self):
        with pytest.raises(ValueError):
            ct.PdParams(f=-1.0, d=0.1, zeta=0.5)
        with pytest.raises(ValueError):
            ct.NlpdParams(ct.PdParams(f=1.0, d=0.1, zeta=0.5), xi=1.5)
        with pytest.raises(ValueError):
            # e_max below the onset force is unstitchable
            ct.NlpdParams(ct.PdParams(f=10.0, d=0.1, zeta=0.5), xi=0.9,
                          e_max=1.0)


class TestPdForce:
    def test_linear_region(self):
        p = ct.PdParams(f=10.0, d=0.1, zeta=0.0)
        assert ct.pd_force(0.05, 0.0, 0.0, p) == pytest.approx(100.0 * 0.05)

    def test_saturation_exact(self):
        p = ct.PdParams(f=10.0, d=0.1, zeta=0.0)
        for e in np.linspace(-5.0, 5.0, 201):
            f = ct.pd_force(e, 0.0, 0.0, p)
            assert abs(f) <= 10.0 + 1e-12
            if abs(e) >= 0.1:
                assert abs(f) == pytest.approx(10.0)

    def test_damping_term(self):
        p = ct.PdParams(f=10.0, d=0.1, zeta=0.7)
        f0 = ct.pd_force(0.0, 0.0, 0.0, p)
        f1 = ct.pd_force(0.0, 0.0, 2.0, p)
        assert f1 - f0 == pytest.approx(-2.0 * p.k_d)


class TestFicEnergyForce:
    def setup_method(self):
        self.params = ct.table_params()["cart_lin"]

    def test_linear_inside_onset(self):
        p = self.params
        for a in np.linspace(-p.alpha_b, p.alpha_b, 41):
            assert ct.fic_energy_force(a, p) == pytest.approx(p.pd.k_p * a)

    def test_continuity_at_onset(self):
        p = self.params
        below = ct.fic_energy_force(p.alpha_b - 1e-12, p)
        above = ct.fic_energy_force(p.alpha_b + 1e-12, p)
        assert abs(above - below) <= 0.02 * p.e_0

    def test_monotone_and_bounded(self):
        p = self.params
        xs = np.linspace(0.0, 10.0 * p.pd.d, 500)
        fs = [ct.fic_energy_force(x, p) for x in xs]
        assert all(b >= a - 1e-12 for a, b in zip(fs, fs[1:]))
        assert all(f <= p.e_max + 1e-12 for f in fs)
        assert fs[-1] >= 0.999 * p.e_max

    def test_odd_symmetry(self):
        p = self.params
        for a in np.linspace(0.0, 0.5, 50):
            assert ct.fic_energy_force(-a, p) == pytest.approx(
                -ct.fic_energy_force(a, p))


class TestNlpdForce:
    def setup_method(self):
        self.params = ct.table_params()["cart_lin"]

    def test_bounded_over_random_sweep(self):
        p = self.params
        rng = np.random.default_rng(2)
        state = ct.FicChannelState()
        for _ in range(2000):
            a_d = rng.uniform(-0.5, 0.5)
            f, state = ct.nlpd_force(a_d, 0.0, 0.0, p, state)
            assert abs(f) <= p.e_max + 1e-9

    def test_convergence_midpoint_zero(self):
        p = self.params
        m = 0.2
        _, state = ct.nlpd_force(m, 0.0, 0.0, p, ct.FicChannelState())
        assert state.phase == "divergence" and state.alpha_max == m
        f, state = ct.nlpd_force(0.5 * m, 0.0, 0.0, p, state)
        assert state.phase == "convergence"
        assert f == pytest.approx(0.0, abs=1e-12)

    def test_episode_reset_on_zero_crossing(self):
        p = self.params
        _, state = ct.nlpd_force(0.2, 0.0, 0.0, p, ct.FicChannelState())
        _, state = ct.nlpd_force(0.1, 0.0, 0.0, p, state)
        assert state.phase == "convergence"
        _, state = ct.nlpd_force(-0.05, 0.0, 0.0, p, state)
        assert state.phase == "divergence"
        assert state.alpha_max == -0.05

    def test_convergence_releases_no_more_than_stored(self):
        # energy stored while diverging 0 -> m must bound the energy released
        # while converging m -> 0, for extrema inside and beyond the onset
        p = self.params
        for m in (0.02, 0.5 * p.alpha_b, p.alpha_b, 0.2, 0.6):
            stored, err_s = quad(lambda a: ct.fic_energy_force(a, p), 0.0, m,
                                 epsabs=1e-6)
            e_m = ct.fic_energy_force(m, p)
            released, err_r = quad(lambda a: (2.0 * e_m / m) * (a - 0.5 * m),
                                   0.0, m, epsabs=1e-6)
            assert err_s < 1e-6 and err_r < 1e-6
            assert stored >= -1e-9
            assert released <= stored + 1e-6


class TestVectorizedChannels:
    def test_matches_scalar_sequence(self, dual):
        ctrl = ct.InteractionController(dual)
        rng = np.random.default_rng(9)
        t = ct.table_params()
        params = [t["cart_ang"]] * 3 + [t["cart_lin"]] * 3
        states = [ct.FicChannelState() for _ in range(6)]
        for _ in range(300):
            err = rng.uniform(-0.4, 0.4, size=6)
            twist = rng.normal(scale=0.2, size=6)
            w_vec = ctrl._nlpd_wrench(0, err, twist)
            w_ref = np.empty(6)
            for j in range(6):
                w_ref[j], states[j] = ct.nlpd_force(err[j], 0.0, twist[j],
                                                    params[j], states[j])
            np.testing.assert_allclose(w_vec, w_ref, atol=1e-12)
            np.testing.assert_allclose(ctrl._fic_max[0],
                                       [s.alpha_max for s in states],
                                       atol=1e-15)


class TestRelativeJacobian:
    def test_matches_model_routine(self, dual, q_start, rng):
        q = q_start + rng.uniform(-0.1, 0.1, size=14)
        XL = rb.forward_kinematics(dual.left, q[:7])
        XR = rb.forward_kinematics(dual.right, q[7:])
        J = ct.relative_jacobian_from(rb.jacobian_world(dual.left, q[:7]),
                                      rb.jacobian_world(dual.right, q[7:]),
                                      XL.rotation, XL.translation,
                                      XR.translation)
        np.testing.assert_allclose(J, rb.relative_jacobian(dual, q), atol=1e-10)


class TestComputeTorques:
    def test_perfect_tracking_reduces_to_gravity(self, dual, q_start):
        ctrl = ct.InteractionController(dual)
        XL = rb.forward_kinematics(dual.left, q_start[:7])
        XR = rb.forward_kinematics(dual.right, q_start[7:])
        desired = rt.RetargetOutput(
            q_d=q_start.copy(), lambda_L_d=np.zeros(6), lambda_R_d=np.zeros(6),
            X_L_d=XL, X_R_d=XR, clamped=False, qp_status="optimal")
        tau = ctrl.compute_torques(q_start, np.zeros(14), desired)
        np.testing.assert_allclose(tau, rb.gravity_torques(dual, q_start),
                                   atol=1e-9)

    def test_contact_feedforward_term(self, dual, q_start, rng):
        ctrl = ct.InteractionController(dual)
        XL = rb.forward_kinematics(dual.left, q_start[:7])
        XR = rb.forward_kinematics(dual.right, q_start[7:])
        lam_L, lam_R = rng.normal(size=6), rng.normal(size=6)
        desired = rt.RetargetOutput(
            q_d=q_start.copy(), lambda_L_d=lam_L, lambda_R_d=lam_R,
            X_L_d=XL, X_R_d=XR, clamped=False, qp_status="optimal")
        tau = ctrl.compute_torques(q_start, np.zeros(14), desired)
        np.testing.assert_allclose(
            tau, rt.quasi_static_torque(dual, q_start, lam_L, lam_R),
            atol=1e-9)

    def test_posture_error_is_bounded_effort(self, dual, q_start):
        # a large joint error saturates at f per joint on the joint-PD term
        ctrl = ct.InteractionController(dual)
        XL = rb.forward_kinematics(dual.left, q_start[:7])
        XR = rb.forward_kinematics(dual.right, q_start[7:])
        desired = rt.RetargetOutput(
            q_d=q_start + 5.0, lambda_L_d=np.zeros(6), lambda_R_d=np.zeros(6),
            X_L_d=XL, X_R_d=XR, clamped=False, qp_status="optimal")
        tau = ctrl.compute_torques(q_start, np.zeros(14), desired)
        extra = tau - rb.gravity_torques(dual, q_start)
        assert np.max(np.abs(extra)) <= ct.table_params()["joint"].f + 1e-9
