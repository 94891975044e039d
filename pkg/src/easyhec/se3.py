"""Rigid transforms on SE(3), twists in se(3), and pose error metrics.

Twist layout is fixed as (rho, phi): translational part first, rotational
part second.  Every function in this module is pure.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError

#: below this rotation angle the exp/log closed forms switch to Taylor series
SMALL_ANGLE = 1e-8

_ORTHO_TOL = 1e-9


def hat(v: np.ndarray) -> np.ndarray:
    """Skew-symmetric matrix of a 3-vector (cross-product operator)."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def _check_rotation(r: np.ndarray) -> None:
    if r.shape != (3, 3) or not np.all(np.isfinite(r)):
        raise InvalidArgumentError("rotation must be a finite 3x3 matrix")
    if np.max(np.abs(r.T @ r - np.eye(3))) > _ORTHO_TOL:
        raise InvalidArgumentError("rotation matrix is not orthonormal")
    if abs(np.linalg.det(r) - 1.0) > _ORTHO_TOL:
        raise InvalidArgumentError("rotation matrix determinant is not +1")


@dataclass(frozen=True)
class Pose:
    """Rigid transform: rotation (3x3 orthonormal) plus translation (meters)."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        _check_rotation(r)
        if not np.all(np.isfinite(t)):
            raise InvalidArgumentError("translation must be finite")
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.eye(3), np.zeros(3))

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    @staticmethod
    def from_matrix(m: np.ndarray) -> "Pose":
        m = np.asarray(m, dtype=np.float64)
        if m.shape != (4, 4):
            raise InvalidArgumentError("pose matrix must be 4x4")
        return Pose(m[:3, :3], m[:3, 3])

    def to_json(self) -> str:
        return json.dumps({"matrix": [float(x) for x in self.matrix().ravel()]})

    @staticmethod
    def from_json(text: str) -> "Pose":
        obj = json.loads(text)
        vals = obj.get("matrix")
        if not isinstance(vals, list) or len(vals) != 16:
            raise InvalidArgumentError('pose JSON must hold "matrix" with 16 numbers')
        return Pose.from_matrix(np.array(vals, dtype=np.float64).reshape(4, 4))


@dataclass(frozen=True)
class Twist:
    """se(3) element: rho = translational part, phi = axis-angle rotation."""

    rho: np.ndarray
    phi: np.ndarray

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=np.float64).reshape(3)
        phi = np.asarray(self.phi, dtype=np.float64).reshape(3)
        if not (np.all(np.isfinite(rho)) and np.all(np.isfinite(phi))):
            raise InvalidArgumentError("twist entries must be finite")
        rho.setflags(write=False)
        phi.setflags(write=False)
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "phi", phi)

    @staticmethod
    def zero() -> "Twist":
        return Twist(np.zeros(3), np.zeros(3))

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.rho, self.phi])

    @staticmethod
    def from_array(v: np.ndarray) -> "Twist":
        v = np.asarray(v, dtype=np.float64).reshape(6)
        return Twist(v[:3], v[3:])


def _sin_coeffs(theta: float) -> tuple[float, float]:
    """Return (1-cos)/theta^2 and (theta-sin)/theta^3, stable near zero."""
    if theta < SMALL_ANGLE:
        t2 = theta * theta
        return 0.5 - t2 / 24.0, 1.0 / 6.0 - t2 / 120.0
    s = math.sin(0.5 * theta)
    c1 = 2.0 * s * s / (theta * theta)  # (1 - cos)/theta^2 without cancellation
    c2 = (theta - math.sin(theta)) / theta**3
    return c1, c2


def rodrigues(phi: np.ndarray) -> np.ndarray:
    """Rotation matrix of an axis-angle vector."""
    theta = float(np.linalg.norm(phi))
    w = hat(phi)
    c1, _ = _sin_coeffs(theta)
    if theta < SMALL_ANGLE:
        sinc = 1.0 - theta * theta / 6.0
    else:
        sinc = math.sin(theta) / theta
    return np.eye(3) + sinc * w + c1 * (w @ w)


def _so3_left_jacobian(phi: np.ndarray) -> np.ndarray:
    theta = float(np.linalg.norm(phi))
    w = hat(phi)
    c1, c2 = _sin_coeffs(theta)
    return np.eye(3) + c1 * w + c2 * (w @ w)


def _so3_left_jacobian_inv(phi: np.ndarray) -> np.ndarray:
    theta = float(np.linalg.norm(phi))
    w = hat(phi)
    if theta < SMALL_ANGLE:
        c = 1.0 / 12.0 + theta * theta / 720.0
    else:
        c = 1.0 / (theta * theta) - (1.0 + math.cos(theta)) / (
            2.0 * theta * math.sin(theta)
        )
    return np.eye(3) - 0.5 * w + c * (w @ w)


def exp_twist(xi: Twist) -> Pose:
    """Exponential map se(3) -> SE(3)."""
    r = rodrigues(xi.phi)
    v = _so3_left_jacobian(xi.phi)
    return Pose(r, v @ xi.rho)


def _so3_log(r: np.ndarray) -> np.ndarray:
    tr = float(np.trace(r))
    theta = math.acos(min(1.0, max(-1.0, (tr - 1.0) / 2.0)))
    if theta < SMALL_ANGLE:
        # first-order: R ~ I + hat(phi)
        return 0.5 * np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    if math.pi - theta < 1e-6:
        # near pi the standard formula divides by sin(theta); recover the
        # axis from the symmetric part (R + I)/2 = n n^T + O(pi - theta)
        b = (r + np.eye(3)) / 2.0
        k = int(np.argmax(np.diag(b)))
        n = b[:, k] / math.sqrt(max(b[k, k], 1e-300))
        n = n / np.linalg.norm(n)
        return theta * n
    axis = np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    return (theta / (2.0 * math.sin(theta))) * axis


def log_pose(t: Pose) -> Twist:
    """Logarithm map SE(3) -> se(3); returns the canonical ||phi|| <= pi twist."""
    phi = _so3_log(t.rotation)
    rho = _so3_left_jacobian_inv(phi) @ t.translation
    return Twist(rho, phi)


def compose(a: Pose, b: Pose) -> Pose:
    return Pose(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def inverse(a: Pose) -> Pose:
    rt = a.rotation.T
    return Pose(rt, -(rt @ a.translation))


def apply(a: Pose, p) -> np.ndarray:
    """Transform a 3-point (or an (N, 3) array of points)."""
    p = np.asarray(p, dtype=np.float64)
    if p.ndim == 1:
        return a.rotation @ p + a.translation
    return p @ a.rotation.T + a.translation


def rotation_error_deg(a: Pose, b: Pose) -> float:
    """Geodesic rotation distance in degrees."""
    c = (float(np.trace(a.rotation @ b.rotation.T)) - 1.0) / 2.0
    return math.degrees(math.acos(min(1.0, max(-1.0, c))))


def translation_error(a: Pose, b: Pose) -> float:
    """Euclidean translation distance in meters."""
    return float(np.linalg.norm(a.translation - b.translation))


def adjoint_algebra(xi: Twist) -> np.ndarray:
    """The 6x6 adjoint of a twist in (rho, phi) ordering."""
    ad = np.zeros((6, 6))
    wp = hat(xi.phi)
    ad[:3, :3] = wp
    ad[:3, 3:] = hat(xi.rho)
    ad[3:, 3:] = wp
    return ad


def se3_left_jacobian(xi: Twist, terms: int = 40) -> np.ndarray:
    """Left Jacobian of the SE(3) exponential map.

    Satisfies exp(xi + d) = exp(J_l(xi) d) exp(xi) to first order in d.
    Evaluated by its defining power series sum_n ad^n / (n+1)!, which
    converges to machine precision for ||phi|| <= pi well before 40 terms.
    """
    ad = adjoint_algebra(xi)
    result = np.eye(6)
    term = np.eye(6)
    for n in range(1, terms + 1):
        term = term @ ad / (n + 1.0)
        result = result + term
        if np.max(np.abs(term)) < 1e-18:
            break
    return result
