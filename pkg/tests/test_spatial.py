"""Spatial algebra unit tests: rotations, poses, wrench/motion transforms."""

import math

import numpy as np
import pytest

from bimanual.spatial import (
    Pose,
    axis_angle_rotation,
    gravity_only_wrench_transform,
    motion_transform,
    pose_error,
    quaternion_to_rotation,
    rotation_log,
    rotation_to_quaternion,
    rotation_x,
    rotation_y,
    rotation_z,
    skew,
    wrench_transform,
)


def random_rotation(rng):
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return axis_angle_rotation(axis, rng.uniform(-np.pi, np.pi))


def random_pose(rng):
    return Pose(random_rotation(rng), rng.normal(scale=0.5, size=3))


class TestSkew:
    def test_zero(self):
        assert np.array_equal(skew(np.zeros(3)), np.zeros((3, 3)))

    def test_basis_cross(self):
        assert np.array_equal(skew([1, 0, 0]) @ [0, 1, 0], [0, 0, 1])

    def test_matches_cross_product(self, rng):
        for _ in range(50):
            v, u = rng.normal(size=3), rng.normal(size=3)
            np.testing.assert_allclose(skew(v) @ u, np.cross(v, u),
                                       rtol=1e-12, atol=1e-14)

    def test_antisymmetric(self, rng):
        S = skew(rng.normal(size=3))
        assert np.array_equal(S.T, -S)


class TestRotations:
    def test_elementary_axes(self):
        a = 0.37
        np.testing.assert_allclose(rotation_x(a), axis_angle_rotation([1, 0, 0], a))
        np.testing.assert_allclose(rotation_y(a), axis_angle_rotation([0, 1, 0], a))
        np.testing.assert_allclose(rotation_z(a), axis_angle_rotation([0, 0, 1], a))

    def test_log_of_known_rotation(self):
        np.testing.assert_allclose(rotation_log(rotation_z(np.pi / 6)),
                                   [0.0, 0.0, np.pi / 6], atol=1e-12)

    def test_log_roundtrip(self, rng):
        for _ in range(50):
            axis = rng.normal(size=3)
            axis /= np.linalg.norm(axis)
            angle = rng.uniform(1e-8, np.pi - 1e-3)
            w = rotation_log(axis_angle_rotation(axis, angle))
            np.testing.assert_allclose(w, axis * angle, atol=1e-9)

    def test_log_near_identity(self):
        w = rotation_log(np.eye(3))
        assert np.array_equal(w, np.zeros(3))

    def test_log_near_pi(self):
        axis = np.array([1.0, 2.0, -0.5])
        axis /= np.linalg.norm(axis)
        R = axis_angle_rotation(axis, np.pi - 1e-8)
        w = rotation_log(R)
        np.testing.assert_allclose(np.abs(w @ axis), np.pi - 1e-8, atol=1e-5)
        np.testing.assert_allclose(np.linalg.norm(np.cross(w, axis)), 0.0,
                                   atol=1e-5)

    def test_quaternion_roundtrip(self, rng):
        for _ in range(100):
            R = random_rotation(rng)
            q = rotation_to_quaternion(R)
            assert q[0] >= 0.0
            np.testing.assert_allclose(quaternion_to_rotation(q), R, atol=1e-12)

    def test_quaternion_negative_trace_branches(self):
        # 180-degree rotations exercise each argmax branch of the conversion
        for axis in np.eye(3):
            R = axis_angle_rotation(axis, np.pi)
            np.testing.assert_allclose(
                quaternion_to_rotation(rotation_to_quaternion(R)), R, atol=1e-12)

    def test_quaternion_normalized_on_ingest(self):
        np.testing.assert_allclose(quaternion_to_rotation([2.0, 0, 0, 0]),
                                   np.eye(3), atol=1e-15)
        with pytest.raises(ValueError):
            quaternion_to_rotation([0.0, 0.0, 0.0, 0.0])


class TestPose:
    def test_compose_inverse(self, rng):
        A, B = random_pose(rng), random_pose(rng)
        C = A @ B
        p = rng.normal(size=3)
        np.testing.assert_allclose(C.apply(p), A.apply(B.apply(p)), atol=1e-12)
        AI = A.inverse()
        np.testing.assert_allclose(AI.apply(A.apply(p)), p, atol=1e-12)

    def test_identity(self):
        I = Pose.identity()
        assert np.array_equal(I.rotation, np.eye(3))
        assert np.array_equal(I.translation, np.zeros(3))


class TestWrenchTransform:
    def test_identity_pose(self):
        assert np.array_equal(wrench_transform(Pose.identity()), np.eye(6))

    def test_lever_arm_law(self):
        p = np.array([0.1, -0.2, 0.3])
        f = np.array([1.0, 2.0, 3.0])
        w = wrench_transform(Pose(np.eye(3), p)) @ np.concatenate([np.zeros(3), f])
        np.testing.assert_allclose(w[:3], np.cross(p, f), atol=1e-15)
        np.testing.assert_allclose(w[3:], f, atol=1e-15)

    def test_matches_explicit_formula(self, rng):
        for _ in range(20):
            X = random_pose(rng)
            lam = rng.normal(size=6)
            out = wrench_transform(X) @ lam
            R, t = X.rotation, X.translation
            tau = R @ lam[:3] + np.cross(t, R @ lam[3:])
            np.testing.assert_allclose(out, np.concatenate([tau, R @ lam[3:]]),
                                       atol=1e-12)

    def test_composition(self, rng):
        A, B = random_pose(rng), random_pose(rng)
        np.testing.assert_allclose(wrench_transform(A @ B),
                                   wrench_transform(A) @ wrench_transform(B),
                                   atol=1e-10)

    def test_power_invariance(self, rng):
        # wrench_transform is the inverse-transpose dual of motion_transform,
        # so wrench . twist is frame-invariant
        for _ in range(20):
            X = random_pose(rng)
            w, v = rng.normal(size=6), rng.normal(size=6)
            lhs = (wrench_transform(X) @ w) @ (motion_transform(X) @ v)
            np.testing.assert_allclose(lhs, w @ v, atol=1e-10)

    def test_gravity_only_equivalence(self, rng):
        # for a pure force acting at the destination-frame origin the full
        # transform (translation dropped) reduces to the simplified one
        for _ in range(100):
            X = random_pose(rng)
            lam = np.concatenate([np.zeros(3), rng.normal(size=3)])
            full = wrench_transform(Pose(X.rotation, np.zeros(3))) @ lam
            simplified = gravity_only_wrench_transform(X) @ lam
            np.testing.assert_allclose(full, simplified, atol=1e-12)

    def test_gravity_only_rotation_pattern(self):
        mg = 2.0 * 9.81
        lam = np.array([0, 0, 0, 0, 0, -mg])
        out = gravity_only_wrench_transform(Pose(rotation_x(np.pi / 2))) @ lam
        np.testing.assert_allclose(out, [0, 0, 0, 0, mg, 0], atol=1e-12)


class TestPoseError:
    def test_equal_poses(self, rng):
        X = random_pose(rng)
        assert np.allclose(pose_error(X, X), np.zeros(6), atol=1e-12)

    def test_pure_translation(self):
        a = Pose()
        d = Pose(np.eye(3), [0.1, 0, 0])
        np.testing.assert_allclose(pose_error(a, d), [0, 0, 0, 0.1, 0, 0],
                                   atol=1e-15)

    def test_known_rotation(self):
        e = pose_error(Pose(), Pose(rotation_z(np.pi / 6)))
        np.testing.assert_allclose(e, [0, 0, np.pi / 6, 0, 0, 0], atol=1e-12)

    def test_first_order_antisymmetry(self, rng):
        for _ in range(20):
            A = random_pose(rng)
            axis = rng.normal(size=3)
            axis /= np.linalg.norm(axis)
            B = Pose(axis_angle_rotation(axis, 0.05) @ A.rotation,
                     A.translation + rng.normal(scale=0.01, size=3))
            np.testing.assert_allclose(pose_error(A, B), -pose_error(B, A),
                                       atol=1e-3)
