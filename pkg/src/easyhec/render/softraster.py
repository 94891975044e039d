"""Silhouette rasterization: hard (binary) and soft (differentiable) masks.

The soft mask follows a sigmoid-of-squared-signed-distance formulation:
per triangle f and pixel p, D_f(p) = sigmoid(sign * d(p, f)^2 / sigma)
with d the boundary distance normalized by the image diagonal; per link
S_l = 1 - prod_f (1 - D_f); the output is min(1, sum_l S_l).

Hot loops live in a compiled extension when available, with a pure-numpy
fallback selected at import time (see easyhec.render.kernels).
"""

from __future__ import annotations

import logging
import math

import numpy as np

from ..errors import DegenerateGeometryError, InvalidArgumentError
from ..mesh import TriangleMesh
from .camera import CameraIntrinsics, project_vertices

log = logging.getLogger(__name__)

try:
    from . import _kernels_cy as kernels
except ImportError:  # pragma: no cover - depends on build environment
    from . import _kernels_py as kernels

    log.warning("compiled rasterization kernels unavailable; using numpy fallback")

#: sigmoid argument beyond which D_f snaps to exactly 0 or 1
CUTOFF = 30.0
#: triangles below this area (diagonal-normalized units squared) are skipped
MIN_AREA_NORM = 1e-12


def backend_name() -> str:
    return kernels.BACKEND


def flatten_scene(links_cam: list[TriangleMesh], k: CameraIntrinsics):
    """Project per-link meshes and drop triangles touching the near plane.

    Returns (verts2d, z, tris, tri_link, n_links).  verts2d is in pixel
    coordinates; culled triangles are removed from tris entirely.
    """
    if not links_cam:
        return (np.zeros((0, 2)), np.zeros(0), np.zeros((0, 3), dtype=np.int32),
                np.zeros(0, dtype=np.int32), 0)
    verts_parts, tri_parts, link_parts = [], [], []
    offset = 0
    for li, m in enumerate(links_cam):
        verts_parts.append(m.vertices)
        tri_parts.append(m.triangles + offset)
        link_parts.append(np.full(len(m.triangles), li, dtype=np.int32))
        offset += len(m.vertices)
    verts3 = np.concatenate(verts_parts)
    tris = np.concatenate(tri_parts).astype(np.int32)
    tri_link = np.concatenate(link_parts)
    uv, z = project_vertices(k, verts3)
    valid = np.all(z[tris] > k.near, axis=1)
    n_culled = int(np.sum(~valid))
    if n_culled:
        log.debug("discarding %d triangles at or behind the near plane", n_culled)
    return (np.ascontiguousarray(uv), z, np.ascontiguousarray(tris[valid]),
            np.ascontiguousarray(tri_link[valid]), len(links_cam))


def render_hard_mask(links_cam: list[TriangleMesh], k: CameraIntrinsics) -> np.ndarray:
    """Binary silhouette: pixel centers inside any front-facing projected triangle."""
    mask = np.zeros((k.height, k.width))
    verts, _, tris, _, _ = flatten_scene(links_cam, k)
    if len(tris):
        kernels.hard_mask(verts, tris, MIN_AREA_NORM * k.diagonal**2, mask)
    return mask


def soft_forward_arrays(verts2d, tris, tri_link, n_links, k: CameraIntrinsics, sigma):
    """Soft rasterization from pre-projected arrays.

    Returns (mask, P, sum_s) where P holds the per-link survival products
    needed by the backward pass and sum_s the unclamped per-pixel link sum.
    """
    if sigma <= 0:
        raise InvalidArgumentError("sigma must be positive")
    sigma_eff = sigma * k.diagonal**2
    P = np.ones((max(n_links, 1), k.height, k.width))
    if len(tris):
        kernels.soft_products(verts2d, tris, tri_link, sigma_eff, CUTOFF,
                              MIN_AREA_NORM * k.diagonal**2, P)
    sum_s = np.sum(1.0 - P, axis=0)
    mask = np.minimum(1.0, sum_s)
    return mask, P, sum_s


def soft_backward_arrays(verts2d, tris, tri_link, P, pixw, k: CameraIntrinsics, sigma):
    """Gradient of a pixel-weighted sum of the soft mask w.r.t. 2-D vertices."""
    sigma_eff = sigma * k.diagonal**2
    grad = np.zeros((len(verts2d), 2))
    if len(tris):
        kernels.soft_backward(verts2d, tris, tri_link, sigma_eff, CUTOFF,
                              MIN_AREA_NORM * k.diagonal**2, P,
                              np.ascontiguousarray(pixw), grad)
    return grad


def render_soft_mask(links_cam: list[TriangleMesh], k: CameraIntrinsics,
                     sigma: float = 1e-4) -> np.ndarray:
    """Differentiable soft silhouette of the given camera-frame meshes."""
    verts, _, tris, tri_link, n_links = flatten_scene(links_cam, k)
    mask, _, _ = soft_forward_arrays(verts, tris, tri_link, n_links, k, sigma)
    return mask


def boundary_distance(pixel, tri, image_diagonal: float = 1.0):
    """Distance from a pixel to a projected triangle's boundary.

    Returns (d, inside) with d normalized by the image diagonal.  Raises
    for degenerate (near-zero-area) triangles, which rasterization skips.
    """
    px, py = float(pixel[0]), float(pixel[1])
    tri = np.asarray(tri, dtype=np.float64).reshape(3, 2)
    a, b, c = tri
    area2 = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    if abs(area2) / (image_diagonal**2) < MIN_AREA_NORM:
        raise DegenerateGeometryError("triangle area below rasterization threshold")
    best = math.inf
    for (p0, p1) in ((a, b), (b, c), (c, a)):
        ex, ey = p1[0] - p0[0], p1[1] - p0[1]
        wx, wy = px - p0[0], py - p0[1]
        ee = ex * ex + ey * ey
        t = min(1.0, max(0.0, (wx * ex + wy * ey) / ee)) if ee > 0 else 0.0
        dx, dy = wx - t * ex, wy - t * ey
        best = min(best, dx * dx + dy * dy)
    s = 1.0 if area2 >= 0 else -1.0
    c0 = (b[0] - a[0]) * (py - a[1]) - (b[1] - a[1]) * (px - a[0])
    c1 = (c[0] - b[0]) * (py - b[1]) - (c[1] - b[1]) * (px - b[0])
    c2 = (a[0] - c[0]) * (py - c[1]) - (a[1] - c[1]) * (px - c[0])
    inside = s * c0 >= 0 and s * c1 >= 0 and s * c2 >= 0
    return math.sqrt(best) / image_diagonal, inside
