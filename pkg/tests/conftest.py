import numpy as np
import pytest

from easyhec.data import fixture_robot_path
from easyhec.kinematics import LinkSpec, RobotModel, load_robot_model
from easyhec.mesh import TriangleMesh
from easyhec.render import CameraIntrinsics
from easyhec.se3 import Pose


BOX_FACES = np.array(
    [[0, 1, 3], [0, 3, 2], [4, 6, 7], [4, 7, 5], [0, 4, 5], [0, 5, 1],
     [2, 3, 7], [2, 7, 6], [0, 2, 6], [0, 6, 4], [1, 5, 7], [1, 7, 3]],
    dtype=np.int32)


def make_box(dx, dy, dz, center=(0.0, 0.0, 0.0)):
    c = np.asarray(center, dtype=np.float64)
    verts = np.array([[x, y, z] for x in (-dx, dx) for y in (-dy, dy)
                      for z in (-dz, dz)]) + c
    return TriangleMesh(verts, BOX_FACES.copy())


def single_link_robot(mesh):
    spec = LinkSpec(name="link0", mesh=mesh,
                    joint_origin=Pose(np.eye(3), np.zeros(3)),
                    joint_axis=np.array([0.0, 0.0, 1.0]),
                    joint_limits=(-1.0, 1.0))
    return RobotModel(links=(spec,), workspace_radius=10.0, ground_plane=False)


@pytest.fixture(scope="session")
def fixture_robot():
    return load_robot_model(fixture_robot_path())


@pytest.fixture(scope="session")
def intrinsics_small():
    return CameraIntrinsics(fx=200.0, fy=200.0, cx=80.0, cy=60.0,
                            width=160, height=120)


@pytest.fixture(scope="session")
def intrinsics_default():
    return CameraIntrinsics(fx=400.0, fy=400.0, cx=160.0, cy=120.0,
                            width=320, height=240)


def random_pose(rng, max_angle=np.pi - 0.2, trans_scale=1.0):
    from easyhec.se3 import rodrigues
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(0.0, max_angle)
    return Pose(rodrigues(axis * angle), rng.normal(scale=trans_scale, size=3))
