"""Pinhole camera model."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import BehindCameraError, InvalidArgumentError


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    near: float = 0.01

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise InvalidArgumentError("focal lengths must be positive")
        if self.width < 8 or self.height < 8:
            raise InvalidArgumentError("image must be at least 8x8")
        if self.near <= 0:
            raise InvalidArgumentError("near plane must be positive")

    @property
    def diagonal(self) -> float:
        return float(np.hypot(self.width, self.height))

    def scaled(self, width: int, height: int) -> "CameraIntrinsics":
        """Intrinsics for the same camera resampled to a new resolution."""
        sx = width / self.width
        sy = height / self.height
        return CameraIntrinsics(
            fx=self.fx * sx,
            fy=self.fy * sy,
            cx=self.cx * sx,
            cy=self.cy * sy,
            width=width,
            height=height,
            near=self.near,
        )


def project_point(k: CameraIntrinsics, p_cam) -> np.ndarray:
    """Project a camera-frame 3-point to pixel coordinates (u, v)."""
    p = np.asarray(p_cam, dtype=np.float64).reshape(3)
    if p[2] <= k.near:
        raise BehindCameraError(f"point at z={p[2]:.6g} is behind the near plane")
    return np.array([k.fx * p[0] / p[2] + k.cx, k.fy * p[1] / p[2] + k.cy])


def project_vertices(k: CameraIntrinsics, verts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Project an (V, 3) array; no near-plane check (callers cull triangles).

    Returns (uv, z).  Vertices at or behind the near plane get uv = 0; they
    must only appear in culled triangles.
    """
    verts = np.asarray(verts, dtype=np.float64)
    z = verts[:, 2]
    safe = z > k.near
    uv = np.zeros((len(verts), 2))
    zz = np.where(safe, z, 1.0)
    uv[:, 0] = np.where(safe, k.fx * verts[:, 0] / zz + k.cx, 0.0)
    uv[:, 1] = np.where(safe, k.fy * verts[:, 1] / zz + k.cy, 0.0)
    return uv, z
