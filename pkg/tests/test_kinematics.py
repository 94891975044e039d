import json

import numpy as np
import pytest

from easyhec.errors import ValidationError
from easyhec.kinematics import (LinkSpec, RobotModel, forward_kinematics,
                                is_valid_pose, load_robot_model,
                                sample_joint_pose, within_limits)
from easyhec.se3 import Pose, rodrigues

from conftest import make_box


def link(name, axis, origin_t, limits=(-np.pi, np.pi), size=0.02):
    return LinkSpec(name=name, mesh=make_box(size, size, size),
                    joint_origin=Pose(np.eye(3), np.asarray(origin_t, float)),
                    joint_axis=np.asarray(axis, float), joint_limits=limits)


class TestLoadRobotModel:
    def test_fixture_round_trip(self, fixture_robot):
        assert fixture_robot.n_joints == 6
        names = [l.name for l in fixture_robot.links]
        assert names == sorted(names, key=names.index)  # chain order preserved
        assert fixture_robot.links[0].name == "base_yaw"

    def test_two_link_file(self, tmp_path):
        mesh_path = tmp_path / "cube.obj"
        verts = [f"v {x} {y} {z}" for x in (0, 1) for y in (0, 1) for z in (0, 1)]
        faces = ["f 1 2 4 3", "f 5 7 8 6", "f 1 5 6 2",
                 "f 3 4 8 7", "f 1 3 7 5", "f 2 6 8 4"]
        mesh_path.write_text("\n".join(verts + faces) + "\n")
        model_path = tmp_path / "robot.json"
        model_path.write_text(json.dumps({
            "links": [
                {"name": "a", "mesh": "cube.obj", "axis": [0, 0, 1],
                 "limits": [-1.0, 2.0],
                 "origin": [1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1]},
                {"name": "b", "mesh": "cube.obj", "axis": [0, 1, 0],
                 "limits": [-0.5, 0.5],
                 "origin": [1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0.3, 0, 0, 0, 1]},
            ]
        }))
        model = load_robot_model(str(model_path))
        assert model.n_joints == 2
        assert model.links[0].joint_limits == (-1.0, 2.0)
        assert model.links[1].joint_limits == (-0.5, 0.5)

    def test_rejects_inverted_limits(self, tmp_path):
        model_path = tmp_path / "bad.json"
        mesh_path = tmp_path / "t.obj"
        mesh_path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n")
        model_path.write_text(json.dumps({
            "links": [{"name": "a", "mesh": "t.obj", "axis": [0, 0, 1],
                       "limits": [1.0, -1.0],
                       "origin": [1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1]}]
        }))
        with pytest.raises(ValidationError):
            load_robot_model(str(model_path))


class TestForwardKinematics:
    def test_zero_angles_gives_origin_products(self):
        model = RobotModel(links=(
            link("a", [0, 0, 1], [0, 0, 0.1]),
            link("b", [0, 1, 0], [0, 0, 0.2]),
        ))
        poses = forward_kinematics(model, np.zeros(2))
        np.testing.assert_allclose(poses[0].translation, [0, 0, 0.1], atol=1e-15)
        np.testing.assert_allclose(poses[1].translation, [0, 0, 0.3], atol=1e-15)
        np.testing.assert_allclose(poses[1].rotation, np.eye(3), atol=1e-15)

    def test_single_link_quarter_turn(self):
        model = RobotModel(links=(link("a", [0, 0, 1], [0, 0, 0]),))
        pose = forward_kinematics(model, np.array([np.pi / 2]))[0]
        np.testing.assert_allclose(pose.rotation @ [1, 0, 0], [0, 1, 0],
                                   atol=1e-12)

    def test_matches_matrix_chain_oracle(self):
        rng = np.random.default_rng(0)
        model = RobotModel(links=(
            link("a", [0, 0, 1], [0.1, 0, 0.1]),
            link("b", [0, 1, 0], [0, 0.1, 0.2]),
            link("c", [1, 0, 0], [0.2, 0, 0]),
        ))
        q = rng.uniform(-np.pi, np.pi, size=3)
        poses = forward_kinematics(model, q)
        t = np.eye(4)
        for spec, qi, got in zip(model.links, q, poses):
            joint = np.eye(4)
            joint[:3, :3] = rodrigues(np.asarray(spec.joint_axis) * qi)
            t = t @ spec.joint_origin.matrix() @ joint
            np.testing.assert_allclose(got.matrix(), t, atol=1e-12)

    def test_wrong_joint_count_rejected(self, fixture_robot):
        with pytest.raises(Exception):
            forward_kinematics(fixture_robot, np.zeros(3))


class TestSampling:
    def test_determinism(self, fixture_robot):
        a = sample_joint_pose(fixture_robot, np.random.default_rng(5))
        b = sample_joint_pose(fixture_robot, np.random.default_rng(5))
        np.testing.assert_array_equal(a, b)

    def test_within_limits(self, fixture_robot):
        rng = np.random.default_rng(6)
        for _ in range(100):
            q = sample_joint_pose(fixture_robot, rng)
            assert within_limits(fixture_robot, q)

    def test_uniform_mean(self):
        model = RobotModel(links=(link("a", [0, 0, 1], [0, 0, 0],
                                       limits=(-1.0, 1.0)),))
        rng = np.random.default_rng(7)
        samples = [sample_joint_pose(model, rng)[0] for _ in range(10000)]
        assert abs(np.mean(samples)) < 0.05


class TestValidity:
    def test_out_of_limits_invalid(self, fixture_robot):
        q = np.zeros(6)
        q[1] = fixture_robot.links[1].joint_limits[1] + 0.1
        assert not is_valid_pose(fixture_robot, q)

    def test_adjacent_links_exempt(self):
        # two touching links in a straight line: adjacency ignores the contact
        model = RobotModel(links=(
            link("a", [0, 0, 1], [0, 0, 0], size=0.05),
            link("b", [0, 0, 1], [0, 0, 0.05], size=0.05),
        ), workspace_radius=5.0)
        assert is_valid_pose(model, np.zeros(2))

    def test_folded_arm_self_collision(self):
        # link 2 folded back onto link 0: bounding spheres overlap
        model = RobotModel(links=(
            link("a", [0, 1, 0], [0, 0, 0], size=0.08),
            link("b", [0, 1, 0], [0, 0, 0.2], size=0.08),
            link("c", [0, 1, 0], [0, 0, 0.2], size=0.08),
        ), workspace_radius=5.0)
        assert is_valid_pose(model, np.zeros(3))
        # q that folds the chain back on itself
        assert not is_valid_pose(model, np.array([0.0, np.pi, np.pi]))

    def test_fixture_zero_pose_valid(self, fixture_robot):
        assert is_valid_pose(fixture_robot, np.zeros(6))
