"""Consistency-based joint-space exploration.

Chooses the next joint pose as the one whose rendered silhouettes vary the
most across the current set of plausible camera poses: high variance means
the candidate cameras disagree about what that view should look like, so
observing it discriminates between them the fastest.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, ExhaustionError, InvalidArgumentError
from .kinematics import RobotModel, forward_kinematics, is_valid_pose, sample_joint_pose
from .render import CameraIntrinsics, CUTOFF, kernels
from .render.softraster import MIN_AREA_NORM
from .se3 import Pose, apply

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExplorationConfig:
    n_joint_samples: int = 2000
    n_candidates: int = 50
    render_width: int = 64
    render_height: int = 64
    sigma: float = 1e-4

    def __post_init__(self):
        if self.n_joint_samples < 1:
            raise InvalidArgumentError("n_joint_samples must be >= 1")
        if self.n_candidates < 2:
            raise InvalidArgumentError("n_candidates must be >= 2")


def mask_variance(masks) -> float:
    """Mean over pixels of the per-pixel population variance across masks."""
    if len(masks) < 2:
        raise InvalidArgumentError("mask variance needs at least 2 masks")
    shapes = {m.shape for m in masks}
    if len(shapes) != 1:
        raise DimensionMismatchError(f"masks have mixed shapes: {shapes}")
    stack = np.stack(masks)
    return float(np.mean(np.var(stack, axis=0)))


def _flatten_model(model: RobotModel):
    verts_parts, tri_parts, link_parts = [], [], []
    offset = 0
    for li, link in enumerate(model.links):
        verts_parts.append(link.mesh.vertices)
        tri_parts.append(link.mesh.triangles + offset)
        link_parts.append(np.full(len(link.mesh.triangles), li, dtype=np.int32))
        offset += len(link.mesh.vertices)
    return (np.concatenate(verts_parts),
            np.ascontiguousarray(np.concatenate(tri_parts).astype(np.int32)),
            np.ascontiguousarray(np.concatenate(link_parts)))


def _score_sample(model, verts_local, tris, tri_link, link_slices, q,
                  cam_mats, k: CameraIntrinsics, sigma: float) -> float:
    link_poses = forward_kinematics(model, q)
    verts_base = np.empty_like(verts_local)
    for (start, stop), pose in zip(link_slices, link_poses):
        verts_base[start:stop] = apply(pose, verts_local[start:stop])
    # all candidate camera frames at once: (K, V, 3)
    verts_cam = np.einsum("kij,vj->kvi", cam_mats[:, :, :3], verts_base) + cam_mats[:, None, :, 3]
    z = verts_cam[:, :, 2]
    safe = np.where(z > k.near, z, 1.0)
    uv = np.empty(verts_cam.shape[:2] + (2,))
    uv[:, :, 0] = np.where(z > k.near, k.fx * verts_cam[:, :, 0] / safe + k.cx, 0.0)
    uv[:, :, 1] = np.where(z > k.near, k.fy * verts_cam[:, :, 1] / safe + k.cy, 0.0)
    n_k = len(cam_mats)
    s1 = np.zeros((k.height, k.width))
    s2 = np.zeros((k.height, k.width))
    kernels.soft_variance_accum(
        np.ascontiguousarray(uv), np.ascontiguousarray(z), k.near, tris, tri_link,
        len(model.links), k.height, k.width, sigma * k.diagonal**2, CUTOFF,
        MIN_AREA_NORM * k.diagonal**2, s1, s2)
    return float(np.mean(s2 / n_k - (s1 / n_k) ** 2))


def select_next_joint_pose(model: RobotModel, candidates: list[Pose],
                           k: CameraIntrinsics, cfg: ExplorationConfig,
                           rng: np.random.Generator):
    """Pick the valid joint sample whose renders disagree most across candidates.

    Returns (q, score).  Joint samples are drawn in one rng pre-pass so the
    scoring order cannot perturb determinism; ties break to the lowest
    sample index.
    """
    if len(candidates) < 2:
        raise InvalidArgumentError("need at least 2 camera pose candidates")
    samples = [sample_joint_pose(model, rng) for _ in range(cfg.n_joint_samples)]
    valid = [q for q in samples if is_valid_pose(model, q)]
    if not valid:
        raise ExhaustionError(
            f"all {cfg.n_joint_samples} joint samples failed validity filtering; "
            "consider widening joint limits or the workspace radius"
        )
    log.debug("exploration: %d/%d samples valid", len(valid), cfg.n_joint_samples)
    k_render = k.scaled(cfg.render_width, cfg.render_height)
    verts_local, tris, tri_link = _flatten_model(model)
    link_slices = []
    offset = 0
    for link in model.links:
        link_slices.append((offset, offset + len(link.mesh.vertices)))
        offset += len(link.mesh.vertices)
    cam_mats = np.stack([c.matrix()[:3, :] for c in candidates])
    best_q, best_score = None, -1.0
    for q in valid:
        score = _score_sample(model, verts_local, tris, tri_link, link_slices, q,
                              cam_mats, k_render, cfg.sigma)
        if score > best_score:
            best_q, best_score = q, score
    return best_q, best_score
