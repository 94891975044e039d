"""Triangle meshes for robot links, with a minimal Wavefront OBJ loader."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, ParseError, ValidationError
from .se3 import Pose, apply

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TriangleMesh:
    """Immutable triangle soup: vertices (V, 3) meters, triangles (F, 3) indices."""

    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=np.float64)
        f = np.ascontiguousarray(self.triangles, dtype=np.int32)
        if v.ndim != 2 or v.shape[1] != 3 or not np.all(np.isfinite(v)):
            raise ValidationError("vertices must be a finite (V, 3) array")
        if f.ndim != 2 or f.shape[1] != 3 or f.shape[0] < 1:
            raise ValidationError("triangles must be a non-empty (F, 3) array")
        if f.min() < 0 or f.max() >= len(v):
            raise ValidationError("triangle index out of range")
        v.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", f)


def _resolve_index(raw: str, n_vertices: int, path: str, lineno: int) -> int:
    # OBJ faces may carry /vt/vn suffixes; only the vertex index matters here.
    tok = raw.split("/")[0]
    try:
        idx = int(tok)
    except ValueError:
        raise ParseError(f"bad face index {raw!r}", path, lineno) from None
    if idx > 0:
        idx -= 1
    elif idx < 0:
        idx += n_vertices
    else:
        raise ParseError("OBJ face index 0 is invalid", path, lineno)
    if not 0 <= idx < n_vertices:
        raise ValidationError(f"{path}:{lineno}: face index {raw} out of range")
    return idx


def load_obj(path: str) -> TriangleMesh:
    """Load the {v, f} subset of an ASCII OBJ file.

    Faces with more than three vertices are fan-triangulated.  Normals,
    texture coordinates, and material statements are ignored.
    """
    vertices: list[list[float]] = []
    triangles: list[tuple[int, int, int]] = []
    ignored: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            tag = parts[0]
            if tag == "v":
                if len(parts) < 4:
                    raise ParseError("vertex needs 3 coordinates", path, lineno)
                try:
                    vertices.append([float(x) for x in parts[1:4]])
                except ValueError:
                    raise ParseError("bad vertex coordinate", path, lineno) from None
            elif tag == "f":
                if len(parts) < 4:
                    raise ParseError("face needs at least 3 indices", path, lineno)
                idx = [_resolve_index(p, len(vertices), path, lineno) for p in parts[1:]]
                for k in range(1, len(idx) - 1):
                    triangles.append((idx[0], idx[k], idx[k + 1]))
            else:
                ignored.add(tag)
    if ignored:
        log.warning("%s: ignored OBJ statements: %s", path, ", ".join(sorted(ignored)))
    if not triangles:
        raise ValidationError(f"{path}: no faces found")
    return TriangleMesh(np.array(vertices), np.array(triangles, dtype=np.int32))


def transform_mesh(m: TriangleMesh, t: Pose) -> TriangleMesh:
    """Apply a rigid transform to every vertex; connectivity is unchanged."""
    return TriangleMesh(apply(t, m.vertices), m.triangles)


def bounding_sphere(m: TriangleMesh) -> tuple[np.ndarray, float]:
    """Conservative bounding sphere: vertex centroid plus max vertex distance."""
    center = m.vertices.mean(axis=0)
    radius = float(np.max(np.linalg.norm(m.vertices - center, axis=1)))
    return center, radius
