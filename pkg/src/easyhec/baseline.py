"""Classical marker-based eye-to-hand calibration baseline.

Simulates marker detection with optional pixel noise, recovers per-view
camera-to-marker poses with PnP (DLT + Gauss-Newton), and solves the
conjugation problem A_i = X B_i X^-1 relating relative camera motions to
relative end-effector motions.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateGeometryError,
    InvalidArgumentError,
    NonConvergenceError,
    VisibilityError,
)
from .kinematics import RobotModel, forward_kinematics
from .render import CameraIntrinsics
from .se3 import Pose, Twist, apply, compose, exp_twist, hat, inverse, log_pose

log = logging.getLogger(__name__)

_COPLANAR_TOL = 1e-6
_PARALLEL_TOL = 1e-6


@dataclass(frozen=True)
class MarkerModel:
    """Simulated rigid marker: >= 6 non-coplanar points in the end-effector frame."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) < 6:
            raise InvalidArgumentError("marker needs at least 6 3-D points")
        if _coplanarity(pts) < _COPLANAR_TOL:
            raise InvalidArgumentError("marker points are (near-)coplanar")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @staticmethod
    def default(scale: float = 0.05) -> "MarkerModel":
        # octahedron-ish cloud: well-conditioned and cheap
        pts = scale * np.array([
            [1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1],
            [0.7, 0.7, 0.3],
        ])
        return MarkerModel(pts)


def _coplanarity(pts: np.ndarray) -> float:
    """Smallest singular value of the centered cloud; ~0 means coplanar."""
    centered = pts - pts.mean(axis=0)
    return float(np.linalg.svd(centered, compute_uv=False)[-1])


def _project(k: CameraIntrinsics, pts_cam: np.ndarray) -> np.ndarray:
    z = pts_cam[:, 2]
    return np.stack([k.fx * pts_cam[:, 0] / z + k.cx,
                     k.fy * pts_cam[:, 1] / z + k.cy], axis=1)


def _nearest_rotation(m: np.ndarray) -> np.ndarray:
    u, _, vt = np.linalg.svd(m)
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


def _dlt_pose(points3d: np.ndarray, norm2d: np.ndarray) -> Pose:
    """Direct linear transform for [R|t] from normalized image coordinates."""
    n = len(points3d)
    a = np.zeros((2 * n, 12))
    for i in range(n):
        x, y, z = points3d[i]
        u, v = norm2d[i]
        row = np.array([x, y, z, 1.0])
        a[2 * i, 0:4] = row
        a[2 * i, 8:12] = -u * row
        a[2 * i + 1, 4:8] = row
        a[2 * i + 1, 8:12] = -v * row
    _, s, vt = np.linalg.svd(a)
    if s[-2] < 1e-10 * s[0]:
        raise DegenerateGeometryError("DLT system is rank-deficient (coplanar points?)")
    p = vt[-1].reshape(3, 4)
    # fix scale and sign so the points sit in front of the camera
    scale = np.linalg.norm(p[:, :3], ord=2)
    p = p / scale
    depths = points3d @ p[2, :3] + p[2, 3]
    if np.median(depths) < 0:
        p = -p
    r = _nearest_rotation(p[:, :3])
    return Pose(r, p[:, 3])


def solve_pnp(points3d, points2d, k: CameraIntrinsics, max_iters: int = 20) -> Pose:
    """Camera pose from >= 6 non-coplanar 3D-2D correspondences.

    DLT initialization followed by Gauss-Newton refinement of the
    reprojection error over a twist increment.
    """
    points3d = np.asarray(points3d, dtype=np.float64)
    points2d = np.asarray(points2d, dtype=np.float64)
    if len(points3d) != len(points2d):
        raise InvalidArgumentError("3D/2D correspondence counts differ")
    if len(points3d) < 6:
        raise InvalidArgumentError("PnP needs at least 6 correspondences")
    if _coplanarity(points3d) < _COPLANAR_TOL:
        raise DegenerateGeometryError("PnP points are (near-)coplanar")
    norm2d = np.stack([(points2d[:, 0] - k.cx) / k.fx,
                       (points2d[:, 1] - k.cy) / k.fy], axis=1)
    pose = _dlt_pose(points3d, norm2d)
    pts_cam = apply(pose, points3d)
    if np.any(pts_cam[:, 2] <= 0):
        # noisy measurements can leave DLT stragglers behind the camera;
        # restart from a conservative pose viewing the cloud from outside
        centroid = points3d.mean(axis=0)
        radius = max(float(np.linalg.norm(points3d - centroid, axis=1).max()), 1e-6)
        pose = Pose(np.eye(3), np.array([0.0, 0.0, 10.0 * radius]) - centroid)
        pts_cam = apply(pose, points3d)
    res = (_project(k, pts_cam) - points2d).ravel()
    cost = float(res @ res)
    for _ in range(max_iters):
        # jacobian of pixel coords w.r.t. a left-multiplicative twist increment
        jac = np.zeros((2 * len(points3d), 6))
        for i, p in enumerate(pts_cam):
            x, y, zz = p
            d_uv_dp = np.array([[k.fx / zz, 0.0, -k.fx * x / zz**2],
                                [0.0, k.fy / zz, -k.fy * y / zz**2]])
            d_p_dxi = np.hstack([np.eye(3), -hat(p)])
            jac[2 * i:2 * i + 2] = d_uv_dp @ d_p_dxi
        try:
            step = np.linalg.lstsq(jac, -res, rcond=None)[0]
        except np.linalg.LinAlgError as e:
            raise NonConvergenceError(f"Gauss-Newton step failed: {e}") from e
        # backtrack: halve the step until the cost decreases and all points
        # stay in front of the camera (full steps can overshoot badly when
        # the DLT initialization is poor, e.g. small markers + pixel noise)
        accepted = False
        for _ in range(30):
            cand = compose(exp_twist(Twist.from_array(step)), pose)
            pts_new = apply(cand, points3d)
            if np.all(pts_new[:, 2] > 0):
                res_new = (_project(k, pts_new) - points2d).ravel()
                cost_new = float(res_new @ res_new)
                if cost_new <= cost:
                    accepted = True
                    break
            step = 0.5 * step
        if not accepted:
            break  # no admissible descent direction: stationary point
        pose, pts_cam, res, cost = cand, pts_new, res_new, cost_new
        if float(np.linalg.norm(step)) < 1e-14:
            break
    return pose


def solve_ax_xb(pairs) -> Pose:
    """Solve A_i = X B_i X^-1 for X from relative motion pairs.

    Rotation by orthogonal Procrustes on the paired rotation log vectors,
    then translation from the stacked linear system (R_Ai - I) t = R_X t_Bi - t_Ai.
    """
    if len(pairs) < 2:
        raise InvalidArgumentError("need at least 2 motion pairs")
    alphas, betas = [], []
    for a, b in pairs:
        alphas.append(log_pose(a).phi)
        betas.append(log_pose(b).phi)
    alphas = np.stack(alphas)
    betas = np.stack(betas)
    # all axes parallel (or zero) leaves the rotation unobservable
    norms = np.linalg.norm(alphas, axis=1)
    if np.max(norms) < _PARALLEL_TOL:
        raise DegenerateGeometryError("no rotational motion in the A poses")
    unit = alphas[norms > _PARALLEL_TOL] / norms[norms > _PARALLEL_TOL, None]
    if np.all(np.linalg.norm(np.cross(unit, unit[0]), axis=1) < _PARALLEL_TOL):
        raise DegenerateGeometryError("rotation axes are parallel; X is unobservable")
    m = alphas.T @ betas
    u, _, vt = np.linalg.svd(m)
    r_x = u @ np.diag([1.0, 1.0, np.sign(np.linalg.det(u @ vt))]) @ vt
    rows, rhs = [], []
    for a, b in pairs:
        rows.append(a.rotation - np.eye(3))
        rhs.append(r_x @ b.translation - a.translation)
    t_x = np.linalg.lstsq(np.vstack(rows), np.concatenate(rhs), rcond=None)[0]
    return Pose(r_x, t_x)


def marker_calibrate(scenario, joint_poses, pixel_noise_sigma: float = 0.0,
                     marker: MarkerModel | None = None,
                     rng: np.random.Generator | None = None,
                     marker_offset: Pose | None = None) -> Pose:
    """Marker-based estimate of the camera-from-base transform.

    Projects the simulated marker at each joint pose (skipping poses where
    any point leaves the image or the frustum), runs PnP per surviving view,
    and solves the resulting conjugation problem.  marker_offset models an
    imperfectly known marker fixture.
    """
    marker = marker or MarkerModel.default()
    rng = rng or np.random.default_rng(0)
    k = scenario.intrinsics
    t_cb = scenario.t_cb_true
    mounts = []
    cam_marker = []
    for q in joint_poses:
        t_be = forward_kinematics(scenario.robot, q)[-1]
        t_bm = compose(t_be, marker_offset) if marker_offset else t_be
        pts_base = apply(t_bm, marker.points)
        pts_cam = apply(t_cb, pts_base)
        if np.any(pts_cam[:, 2] <= k.near):
            continue
        px = _project(k, pts_cam)
        if (px[:, 0].min() < 0 or px[:, 0].max() >= k.width
                or px[:, 1].min() < 0 or px[:, 1].max() >= k.height):
            continue
        if pixel_noise_sigma > 0:
            px = px + rng.normal(scale=pixel_noise_sigma, size=px.shape)
        cam_marker.append(solve_pnp(marker.points, px, k))
        mounts.append(t_be)
    if len(cam_marker) < 3:
        raise VisibilityError(
            f"marker visible in only {len(cam_marker)} poses; need >= 3"
        )
    pairs = []
    t_cm0_inv = inverse(cam_marker[0])
    t_be0_inv = inverse(mounts[0])
    for t_cm, t_be in zip(cam_marker[1:], mounts[1:]):
        pairs.append((compose(t_cm, t_cm0_inv), compose(t_be, t_be0_inv)))
    # A_i = T_cm,i T_cm,0^-1 = T_cb (T_be,i T_be,0^-1) T_cb^-1, so X = T_cb
    return solve_ax_xb(pairs)
