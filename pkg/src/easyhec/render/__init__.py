"""Pinhole projection and silhouette rasterization."""

from .camera import CameraIntrinsics, project_point, project_vertices
from .softraster import (
    CUTOFF,
    backend_name,
    boundary_distance,
    flatten_scene,
    kernels,
    render_hard_mask,
    render_soft_mask,
    soft_backward_arrays,
    soft_forward_arrays,
)

__all__ = [
    "CUTOFF",
    "CameraIntrinsics",
    "backend_name",
    "boundary_distance",
    "flatten_scene",
    "kernels",
    "project_point",
    "project_vertices",
    "render_hard_mask",
    "render_soft_mask",
    "soft_backward_arrays",
    "soft_forward_arrays",
]
