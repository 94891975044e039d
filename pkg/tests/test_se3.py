import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from easyhec.errors import InvalidArgumentError, ValidationError
from easyhec.se3 import (Pose, Twist, adjoint_algebra, apply, compose,
                         exp_twist, hat, inverse, log_pose, rodrigues,
                         rotation_error_deg, se3_left_jacobian,
                         translation_error)

from conftest import random_pose


def twist(rho, phi):
    return Twist(np.asarray(rho, dtype=float), np.asarray(phi, dtype=float))


class TestExpTwist:
    def test_zero_twist_is_identity(self):
        p = exp_twist(twist([0, 0, 0], [0, 0, 0]))
        np.testing.assert_allclose(p.matrix(), np.eye(4), atol=1e-15)

    def test_quarter_turn_about_z(self):
        p = exp_twist(twist([0, 0, 0], [0, 0, np.pi / 2]))
        np.testing.assert_allclose(p.rotation @ [1, 0, 0], [0, 1, 0], atol=1e-12)
        np.testing.assert_allclose(p.translation, 0, atol=1e-15)

    def test_matches_truncated_matrix_exponential(self):
        # 20-term series of the 4x4 matrix exponential as an independent oracle
        rng = np.random.default_rng(0)
        for _ in range(10):
            phi = rng.normal(size=3)
            phi *= 0.3 / np.linalg.norm(phi)
            rho = rng.normal(size=3)
            xi = np.zeros((4, 4))
            xi[:3, :3] = hat(phi)
            xi[:3, 3] = rho
            series = np.eye(4)
            term = np.eye(4)
            for n in range(1, 20):
                term = term @ xi / n
                series = series + term
            np.testing.assert_allclose(exp_twist(twist(rho, phi)).matrix(),
                                       series, atol=1e-10)

    def test_taylor_branch_continuity(self):
        # values straddling the small-angle switch must agree to 1e-12
        rho = np.array([0.3, -0.2, 0.5])
        direction = np.array([1.0, 1.0, 1.0]) / np.sqrt(3.0)
        eps = 1e-14  # straddle the switch with a negligible angle difference
        below = exp_twist(twist(rho, direction * (1e-8 - eps))).matrix()
        above = exp_twist(twist(rho, direction * (1e-8 + eps))).matrix()
        np.testing.assert_allclose(below, above, atol=1e-12)


class TestLogPose:
    def test_identity_gives_zero(self):
        x = log_pose(Pose(np.eye(3), np.zeros(3)))
        assert np.linalg.norm(x.as_array()) == 0.0

    def test_round_trip(self):
        rng = np.random.default_rng(1)
        for _ in range(30):
            phi = rng.normal(size=3)
            phi *= rng.uniform(1e-6, np.pi - 0.1) / np.linalg.norm(phi)
            rho = rng.normal(size=3)
            back = log_pose(exp_twist(twist(rho, phi)))
            np.testing.assert_allclose(back.phi, phi, atol=1e-9)
            np.testing.assert_allclose(back.rho, rho, atol=1e-9)

    def test_half_turn_about_z(self):
        p = Pose(rodrigues(np.array([0.0, 0.0, np.pi])), np.zeros(3))
        phi = log_pose(p).phi
        np.testing.assert_allclose(np.abs(phi), [0, 0, np.pi], atol=1e-9)


class TestGroupOps:
    def test_apply_identity(self):
        np.testing.assert_array_equal(
            apply(Pose(np.eye(3), np.zeros(3)), np.array([1.0, 2.0, 3.0])),
            [1.0, 2.0, 3.0])

    def test_apply_translation(self):
        p = Pose(np.eye(3), np.array([0.0, 0.0, 1.0]))
        np.testing.assert_array_equal(apply(p, np.zeros(3)), [0.0, 0.0, 1.0])

    def test_compose_matches_sequential_apply(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            a, b = random_pose(rng), random_pose(rng)
            p = rng.normal(size=3)
            np.testing.assert_allclose(apply(compose(a, b), p),
                                       apply(a, apply(b, p)), atol=1e-12)

    def test_inverse_identities(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            a = random_pose(rng)
            np.testing.assert_allclose(compose(a, inverse(a)).matrix(),
                                       np.eye(4), atol=1e-12)
            np.testing.assert_allclose(compose(inverse(a), a).matrix(),
                                       np.eye(4), atol=1e-12)

    def test_apply_batch(self):
        rng = np.random.default_rng(4)
        a = random_pose(rng)
        pts = rng.normal(size=(7, 3))
        batched = apply(a, pts)
        for i in range(7):
            np.testing.assert_allclose(batched[i], apply(a, pts[i]), atol=1e-15)


class TestErrors:
    def test_identical_poses(self):
        rng = np.random.default_rng(5)
        a = random_pose(rng)
        assert rotation_error_deg(a, a) == pytest.approx(0.0, abs=1e-6)
        assert translation_error(a, a) == 0.0

    def test_ninety_degrees(self):
        rng = np.random.default_rng(6)
        for axis in np.eye(3):
            a = random_pose(rng)
            b = Pose(rodrigues(axis * np.pi / 2) @ a.rotation, a.translation)
            assert rotation_error_deg(a, b) == pytest.approx(90.0, abs=1e-9)

    def test_translation_error_norm_oracle(self):
        rng = np.random.default_rng(7)
        a = random_pose(rng)
        b = compose(a, exp_twist(twist([0.01, 0, 0], [0, 0, 0.1])))
        expected = np.linalg.norm(a.translation - b.translation)
        assert translation_error(a, b) == pytest.approx(expected, abs=1e-15)


class TestPoseValidation:
    def test_rejects_non_orthonormal(self):
        with pytest.raises((InvalidArgumentError, ValidationError)):
            Pose(np.eye(3) * 1.1, np.zeros(3))

    def test_rejects_reflection(self):
        r = np.diag([1.0, 1.0, -1.0])
        with pytest.raises((InvalidArgumentError, ValidationError)):
            Pose(r, np.zeros(3))

    def test_json_round_trip(self):
        rng = np.random.default_rng(8)
        a = random_pose(rng)
        b = Pose.from_json(a.to_json())
        np.testing.assert_allclose(a.matrix(), b.matrix(), atol=1e-15)


class TestLeftJacobian:
    def test_finite_difference(self):
        # defining property: exp(xi + J_l(xi)^-1 ... ) — verified directly as
        # exp(xi + d) ~ exp(J_l d) exp(xi) for small d
        rng = np.random.default_rng(9)
        for _ in range(10):
            xi = rng.normal(scale=0.5, size=6)
            jl = se3_left_jacobian(Twist.from_array(xi))
            h = 1e-7
            for i in range(6):
                d = np.zeros(6)
                d[i] = h
                lhs = exp_twist(Twist.from_array(xi + d)).matrix()
                rhs = (exp_twist(Twist.from_array(jl @ d)).matrix()
                       @ exp_twist(Twist.from_array(xi)).matrix())
                np.testing.assert_allclose(lhs, rhs, atol=5e-7)

    def test_identity_at_zero(self):
        np.testing.assert_allclose(
            se3_left_jacobian(twist([0, 0, 0], [0, 0, 0])), np.eye(6), atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-2.0, 2.0), min_size=6, max_size=6))
def test_exp_log_round_trip_property(vals):
    xi = np.asarray(vals)
    phi_norm = np.linalg.norm(xi[3:])
    if phi_norm >= np.pi - 0.1:
        xi[3:] *= (np.pi - 0.1) / phi_norm
    back = log_pose(exp_twist(Twist.from_array(xi))).as_array()
    np.testing.assert_allclose(back, xi, atol=1e-9)


def test_adjoint_algebra_shape():
    rng = np.random.default_rng(10)
    xi = Twist.from_array(rng.normal(size=6))
    ad = adjoint_algebra(xi)
    assert ad.shape == (6, 6)
    np.testing.assert_allclose(ad[:3, :3], hat(xi.phi))
    np.testing.assert_allclose(ad[3:, 3:], hat(xi.phi))
    np.testing.assert_allclose(ad[:3, 3:], hat(xi.rho))
    np.testing.assert_allclose(ad[3:, :3], 0.0)
