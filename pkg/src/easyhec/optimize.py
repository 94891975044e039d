"""Camera-pose calibration by differentiable silhouette rendering.

The unknown camera-from-base transform is parameterized incrementally as
T = exp(delta) . T_anchor with delta a 6-twist, and refined with Adam on
the mean-squared mask discrepancy over all observations.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    DimensionMismatchError,
    InvalidArgumentError,
    NumericalError,
)
from .kinematics import RobotModel, forward_kinematics
from .maskio import validate_mask
from .render import CameraIntrinsics, project_vertices, soft_backward_arrays, soft_forward_arrays
from .se3 import Pose, Twist, apply, compose, exp_twist, se3_left_jacobian

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Observation:
    """One acquired view: joint pose, observed mask, and cached geometry."""

    q: np.ndarray
    mask: np.ndarray
    link_poses: tuple[Pose, ...]
    # flattened base-frame scene, precomputed once per observation
    verts_base: np.ndarray
    tris: np.ndarray
    tri_link: np.ndarray
    n_links: int

    @staticmethod
    def create(model: RobotModel, q: np.ndarray, mask: np.ndarray) -> "Observation":
        mask = validate_mask(mask)
        link_poses = forward_kinematics(model, q)
        verts_parts, tri_parts, link_parts = [], [], []
        offset = 0
        for li, (link, pose) in enumerate(zip(model.links, link_poses)):
            verts_parts.append(apply(pose, link.mesh.vertices))
            tri_parts.append(link.mesh.triangles + offset)
            link_parts.append(np.full(len(link.mesh.triangles), li, dtype=np.int32))
            offset += len(link.mesh.vertices)
        return Observation(
            q=np.asarray(q, dtype=np.float64),
            mask=mask,
            link_poses=tuple(link_poses),
            verts_base=np.ascontiguousarray(np.concatenate(verts_parts)),
            tris=np.ascontiguousarray(np.concatenate(tri_parts).astype(np.int32)),
            tri_link=np.ascontiguousarray(np.concatenate(link_parts)),
            n_links=len(model.links),
        )


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 3e-3
    steps: int = 1000
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    sigma: float = 1e-4
    # Temperature at the last step.  The soft-edge band otherwise puts a loss
    # floor on every silhouette boundary that biases the minimum away from the
    # true pose; annealing sigma geometrically toward a near-hard edge removes
    # that bias while keeping the early wide basin.  None disables annealing.
    sigma_final: float | None = 1e-6
    snapshot_every: int = 1

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise InvalidArgumentError("learning_rate must be positive")
        if self.steps < 1:
            raise InvalidArgumentError("steps must be >= 1")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise InvalidArgumentError("betas must lie in (0, 1)")
        if self.sigma <= 0:
            raise InvalidArgumentError("sigma must be positive")
        if self.sigma_final is not None and self.sigma_final <= 0:
            raise InvalidArgumentError("sigma_final must be positive")
        if self.snapshot_every < 1:
            raise InvalidArgumentError("snapshot_every must be >= 1")

    def sigma_at(self, step: int) -> float:
        """Geometric interpolation from sigma to sigma_final over the run."""
        if self.sigma_final is None or self.steps == 1:
            return self.sigma
        frac = min(1.0, step / (self.steps - 1))
        return float(self.sigma * (self.sigma_final / self.sigma) ** frac)


@dataclass(frozen=True)
class Snapshot:
    step: int
    pose: Pose
    loss: float
    sigma: float = 1e-4


Trajectory = list  # list[Snapshot], ordered by strictly increasing step


def _check_obs(obs, k: CameraIntrinsics) -> None:
    if not obs:
        raise InvalidArgumentError("at least one observation is required")
    for i, o in enumerate(obs):
        if o.mask.shape != (k.height, k.width):
            raise DimensionMismatchError(
                f"observation {i}: mask {o.mask.shape} does not match "
                f"intrinsics {(k.height, k.width)}"
            )


def _pose_scene(t_cb: Pose, o: Observation, k: CameraIntrinsics):
    verts_cam = o.verts_base @ t_cb.rotation.T + t_cb.translation
    uv, z = project_vertices(k, verts_cam)
    valid = np.all(z[o.tris] > k.near, axis=1)
    return verts_cam, np.ascontiguousarray(uv), z, o.tris[valid], o.tri_link[valid]


def _hard_loss(t_cb: Pose, obs, k: CameraIntrinsics) -> float:
    """Mean per-pixel MSE between the hard silhouette and each observed mask.

    The sigma -> 0 limit of calibration_loss; used as a temperature-free
    arbiter between candidate poses after an annealed run.
    """
    from .render.softraster import MIN_AREA_NORM, kernels

    total = 0.0
    for o in obs:
        _, uv, _, tris, tri_link = _pose_scene(t_cb, o, k)
        mask = np.zeros((k.height, k.width))
        if len(tris):
            kernels.hard_mask(uv, np.ascontiguousarray(tris),
                              MIN_AREA_NORM * k.diagonal**2, mask)
        total += float(np.mean((mask - o.mask) ** 2))
    return total / len(obs)


def calibration_loss(t_cb: Pose, obs, k: CameraIntrinsics, sigma: float = 1e-4) -> float:
    """Mean over observations of the per-pixel MSE between soft render and mask."""
    _check_obs(obs, k)
    total = 0.0
    for o in obs:
        _, uv, _, tris, tri_link = _pose_scene(t_cb, o, k)
        mask, _, _ = soft_forward_arrays(uv, tris, tri_link, o.n_links, k, sigma)
        total += float(np.mean((mask - o.mask) ** 2))
    return total / len(obs)


def calibration_loss_grad(delta: Twist, t_anchor: Pose, obs, k: CameraIntrinsics,
                          sigma: float = 1e-4) -> tuple[float, np.ndarray]:
    """Loss and its analytic gradient with respect to the twist increment.

    The pose is T = exp(delta) . t_anchor; the gradient is d(loss)/d(delta)
    under the left-multiplicative increment convention, obtained by chaining
    the per-pixel rasterizer gradient through projection, the rigid action
    on camera-frame points, and the SE(3) left Jacobian at delta.
    """
    _check_obs(obs, k)
    t_cb = compose(exp_twist(delta), t_anchor)
    n_pix = k.width * k.height
    total = 0.0
    g_eps = np.zeros(6)
    for o in obs:
        verts_cam, uv, z, tris, tri_link = _pose_scene(t_cb, o, k)
        mask, p_prod, sum_s = soft_forward_arrays(uv, tris, tri_link, o.n_links, k, sigma)
        residual = mask - o.mask
        total += float(np.mean(residual**2))
        # min(1, .) subgradient: 1 where the link sum is not clamped
        pixw = 2.0 * residual * (sum_s <= 1.0) / (n_pix * len(obs))
        g_uv = soft_backward_arrays(uv, tris, tri_link, p_prod, pixw, k, sigma)
        # chain through the pinhole projection to camera-frame points
        zz = np.where(z > k.near, z, 1.0)
        gx = g_uv[:, 0] * k.fx / zz
        gy = g_uv[:, 1] * k.fy / zz
        gz = -(g_uv[:, 0] * k.fx * verts_cam[:, 0] + g_uv[:, 1] * k.fy * verts_cam[:, 1]) / zz**2
        g_pts = np.stack([gx, gy, gz], axis=1)
        # left increment eps acts as v -> v + rho + phi x v
        g_eps[:3] += g_pts.sum(axis=0)
        g_eps[3:] += np.cross(verts_cam, g_pts).sum(axis=0)
    grad = se3_left_jacobian(delta).T @ g_eps
    return total / len(obs), grad


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @staticmethod
    def zeros(dim: int = 6) -> "AdamState":
        return AdamState(m=np.zeros(dim), v=np.zeros(dim))


def adam_step(state: AdamState, grad: np.ndarray, config: OptimizerConfig):
    """One bias-corrected Adam update; returns (new state, parameter delta)."""
    grad = np.asarray(grad, dtype=np.float64)
    t = state.t + 1
    m = config.beta1 * state.m + (1.0 - config.beta1) * grad
    v = config.beta2 * state.v + (1.0 - config.beta2) * grad**2
    m_hat = m / (1.0 - config.beta1**t)
    v_hat = v / (1.0 - config.beta2**t)
    update = -config.learning_rate * m_hat / (np.sqrt(v_hat) + config.epsilon)
    return AdamState(m=m, v=v, t=t), update


def optimize_pose(init: Pose, obs, k: CameraIntrinsics, config: OptimizerConfig,
                  rng=None) -> tuple[Pose, Trajectory]:
    """Adam refinement of the camera pose; returns the best-loss snapshot.

    Snapshots are recorded every config.snapshot_every steps plus the final
    step; the returned pose is the lowest-loss snapshot, which need not be
    the last iterate.  Deterministic: rng is accepted for interface parity
    but never consumed.
    """
    _check_obs(obs, k)
    delta = np.zeros(6)
    state = AdamState.zeros(6)
    traj: Trajectory = []
    for step in range(config.steps):
        sigma = config.sigma_at(step)
        loss, grad = calibration_loss_grad(Twist.from_array(delta), init, obs, k, sigma)
        if not (math.isfinite(loss) and np.all(np.isfinite(grad))):
            raise NumericalError(
                f"non-finite loss/gradient at step {step}, pose "
                f"{compose(exp_twist(Twist.from_array(delta)), init).matrix().tolist()}"
            )
        if step % config.snapshot_every == 0:
            traj.append(Snapshot(step, compose(exp_twist(Twist.from_array(delta)), init),
                                 loss, sigma))
        state, update = adam_step(state, grad, config)
        delta = delta + update
    final_pose = compose(exp_twist(Twist.from_array(delta)), init)
    final_sigma = config.sigma_at(config.steps - 1)
    final_loss = calibration_loss(final_pose, obs, k, final_sigma)
    if not math.isfinite(final_loss):
        raise NumericalError(f"non-finite loss at final step {config.steps}")
    traj.append(Snapshot(config.steps, final_pose, final_loss, final_sigma))
    if config.sigma_final is None:
        best = min(traj, key=lambda s: s.loss)
        return best.pose, traj
    # annealed runs: losses at different temperatures are not comparable, so
    # arbitrate between the endpoint and the initial pose with the hard
    # (sigma -> 0) silhouette mismatch; refinement can then never return a
    # pose that explains the observed masks worse than where it started
    if _hard_loss(final_pose, obs, k) <= _hard_loss(init, obs, k):
        return final_pose, traj
    return init, traj


def sample_pose_candidates(traj: Trajectory, k: int, window: tuple[int, int],
                           rng: np.random.Generator) -> list[Pose]:
    """Sample k snapshot poses uniformly without replacement from a step window."""
    lo, hi = window
    if lo > hi:
        raise InvalidArgumentError(f"empty candidate window [{lo}, {hi}]")
    pool = [s for s in traj if lo <= s.step <= hi]
    if not pool:
        raise InvalidArgumentError(
            f"no trajectory snapshots inside candidate window [{lo}, {hi}]"
        )
    if len(pool) <= k:
        if len(pool) < k:
            log.warning("candidate window holds %d < %d snapshots; returning all",
                        len(pool), k)
        return [s.pose for s in pool]
    idx = rng.choice(len(pool), size=k, replace=False)
    return [pool[i].pose for i in idx]
