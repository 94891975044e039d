"""Serial-chain robot model, forward kinematics, and joint-pose sampling.

Joint poses are plain float64 arrays of joint angles in radians, one entry
per link of the model.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError, ValidationError
from .mesh import TriangleMesh, bounding_sphere, load_obj
from .se3 import Pose, apply, compose, rodrigues

_AXIS_TOL = 1e-3


@dataclass(frozen=True)
class LinkSpec:
    """One revolute link: mesh in the link frame, joint placed in the parent frame."""

    name: str
    mesh: TriangleMesh
    joint_origin: Pose
    joint_axis: np.ndarray
    joint_limits: tuple[float, float]

    def __post_init__(self):
        axis = np.asarray(self.joint_axis, dtype=np.float64).reshape(3)
        norm = float(np.linalg.norm(axis))
        if abs(norm - 1.0) > _AXIS_TOL:
            raise ValidationError(f"link {self.name}: joint axis is not unit length")
        axis = axis / norm
        axis.setflags(write=False)
        object.__setattr__(self, "joint_axis", axis)
        lo, hi = self.joint_limits
        if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
            raise ValidationError(f"link {self.name}: joint limits must satisfy lo < hi")
        object.__setattr__(self, "joint_limits", (float(lo), float(hi)))


@dataclass(frozen=True)
class RobotModel:
    """Serial chain of revolute links; link i's parent is link i-1."""

    links: tuple[LinkSpec, ...]
    workspace_radius: float = 1.2
    ground_plane: bool = False

    def __post_init__(self):
        if not self.links:
            raise ValidationError("robot model needs at least one link")
        if self.workspace_radius <= 0:
            raise ValidationError("workspace_radius must be positive")
        object.__setattr__(self, "links", tuple(self.links))
        # cached local-frame bounding spheres, used by is_valid_pose
        spheres = tuple(bounding_sphere(l.mesh) for l in self.links)
        object.__setattr__(self, "_link_spheres", spheres)

    @property
    def n_joints(self) -> int:
        return len(self.links)

    def link_spheres(self) -> tuple[tuple[np.ndarray, float], ...]:
        return self._link_spheres  # type: ignore[attr-defined]


def load_robot_model(path: str) -> RobotModel:
    """Load a robot model from JSON; mesh paths are relative to the JSON file."""
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    if not isinstance(obj, dict) or "links" not in obj:
        raise ValidationError(f"{path}: robot JSON must contain a 'links' list")
    base = os.path.dirname(os.path.abspath(path))
    links = []
    for i, spec in enumerate(obj["links"]):
        try:
            name = spec.get("name", f"link{i}")
            mesh_path = os.path.join(base, spec["mesh"])
            origin = np.array(spec["origin"], dtype=np.float64).reshape(4, 4)
            axis = np.array(spec["axis"], dtype=np.float64)
            lo, hi = spec["limits"]
        except (KeyError, TypeError, ValueError) as e:
            raise ValidationError(f"{path}: link {i}: {e}") from e
        links.append(
            LinkSpec(
                name=name,
                mesh=load_obj(mesh_path),
                joint_origin=Pose.from_matrix(origin),
                joint_axis=axis,
                joint_limits=(float(lo), float(hi)),
            )
        )
    return RobotModel(
        links=tuple(links),
        workspace_radius=float(obj.get("workspace_radius", 1.2)),
        ground_plane=bool(obj.get("ground_plane", False)),
    )


def _check_q(model: RobotModel, q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64).reshape(-1)
    if len(q) != model.n_joints:
        raise InvalidArgumentError(
            f"joint vector has length {len(q)}, model has {model.n_joints} joints"
        )
    return q


def forward_kinematics(model: RobotModel, q: np.ndarray) -> list[Pose]:
    """Base-frame pose of every link: T_i = T_{i-1} . origin_i . Rot(axis_i, q_i)."""
    q = _check_q(model, q)
    poses: list[Pose] = []
    current = Pose.identity()
    for link, angle in zip(model.links, q):
        joint_rot = Pose(rodrigues(link.joint_axis * angle), np.zeros(3))
        current = compose(compose(current, link.joint_origin), joint_rot)
        poses.append(current)
    return poses


def sample_joint_pose(model: RobotModel, rng: np.random.Generator) -> np.ndarray:
    """Draw each joint angle uniformly within its limits."""
    lo = np.array([l.joint_limits[0] for l in model.links])
    hi = np.array([l.joint_limits[1] for l in model.links])
    return rng.uniform(lo, hi)


def within_limits(model: RobotModel, q: np.ndarray) -> bool:
    q = _check_q(model, q)
    return all(
        l.joint_limits[0] <= qi <= l.joint_limits[1] for l, qi in zip(model.links, q)
    )


def is_valid_pose(model: RobotModel, q: np.ndarray) -> bool:
    """Joint limits + non-adjacent bounding-sphere separation + workspace bound.

    Adjacent links are exempt from the sphere test (they always touch at the
    joint).  With model.ground_plane set, no link sphere may dip below z = 0.
    """
    q = _check_q(model, q)
    if not within_limits(model, q):
        return False
    poses = forward_kinematics(model, q)
    spheres = model.link_spheres()
    centers = [apply(p, c) for p, (c, _) in zip(poses, spheres)]
    radii = [r for (_, r) in spheres]
    n = len(centers)
    for i in range(n):
        if float(np.linalg.norm(centers[i])) > model.workspace_radius:
            return False
        if model.ground_plane and centers[i][2] - radii[i] < 0.0:
            return False
        for j in range(i + 2, n):
            if float(np.linalg.norm(centers[i] - centers[j])) < radii[i] + radii[j]:
                return False
    return True
