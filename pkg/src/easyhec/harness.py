"""Closed-loop synthetic calibration experiments and batch evaluation."""

from __future__ import annotations

import itertools
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from .baseline import marker_calibrate
from .errors import GenerationError, InvalidArgumentError, ValidationError
from .explore import ExplorationConfig, select_next_joint_pose
from .kinematics import RobotModel, forward_kinematics, is_valid_pose, sample_joint_pose
from .mesh import transform_mesh
from .optimize import Observation, OptimizerConfig, optimize_pose, sample_pose_candidates
from .render import CameraIntrinsics, render_hard_mask
from .se3 import (
    Pose,
    apply,
    compose,
    inverse,
    rodrigues,
    rotation_error_deg,
    translation_error,
)

log = logging.getLogger(__name__)

#: fraction of pixels the arm must cover in a generated scenario
MIN_COVERAGE = 0.01


def worker_count() -> int:
    """Worker cap from EASYHEC_THREADS, defaulting to hardware parallelism."""
    env = os.environ.get("EASYHEC_THREADS", "").strip()
    if env:
        try:
            n = int(env)
        except ValueError:
            raise InvalidArgumentError(f"EASYHEC_THREADS={env!r} is not an integer")
        if n < 1:
            raise InvalidArgumentError("EASYHEC_THREADS must be >= 1")
        return n
    return os.cpu_count() or 1


@dataclass(frozen=True)
class Scenario:
    """One synthetic calibration episode."""

    robot: RobotModel
    intrinsics: CameraIntrinsics
    t_cb_true: Pose
    q0: np.ndarray
    seed: int


@dataclass(frozen=True)
class NoiseModel:
    """Observation corruption standing in for segmentation error."""

    flip_prob: float = 0.0
    morph_radius: int = 0  # pixels; positive dilates, negative erodes

    def __post_init__(self):
        if not 0.0 <= self.flip_prob <= 0.2:
            raise ValidationError("flip_prob must lie in [0, 0.2]")


@dataclass(frozen=True)
class InitMode:
    """How the optimization is seeded: truth perturbation or an explicit pose."""

    kind: str = "perturb"
    rot_deg: float = 10.0
    trans_frac: float = 0.1  # fraction of the camera-to-base distance
    pose: Pose | None = None

    def __post_init__(self):
        if self.kind not in ("perturb", "explicit"):
            raise InvalidArgumentError(f"unknown init mode {self.kind!r}")
        if self.kind == "explicit" and self.pose is None:
            raise InvalidArgumentError("explicit init mode needs a pose")


@dataclass(frozen=True)
class IterationResult:
    views: int
    rotation_error_deg: float
    translation_error_cm: float
    loss: float
    pose: Pose


@dataclass(frozen=True)
class Report:
    selector: str
    entries: tuple[IterationResult, ...]
    wall_time: float


def _unit_sphere(rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


def _look_at_camera(position: np.ndarray, target: np.ndarray, up: np.ndarray) -> Pose:
    """Camera-from-base pose: z forward toward target, y roughly opposite up."""
    fwd = target - position
    fwd = fwd / np.linalg.norm(fwd)
    y0 = -up / np.linalg.norm(up)
    x = np.cross(y0, fwd)
    x = x / np.linalg.norm(x)
    y = np.cross(fwd, x)
    base_from_cam = Pose(np.stack([x, y, fwd], axis=1), position)
    return inverse(base_from_cam)


def arm_coverage(sc: "Scenario", q: np.ndarray) -> float:
    poses = forward_kinematics(sc.robot, q)
    links_cam = [
        transform_mesh(l.mesh, compose(sc.t_cb_true, p))
        for l, p in zip(sc.robot.links, poses)
    ]
    mask = render_hard_mask(links_cam, sc.intrinsics)
    return float(np.mean(mask))


def generate_scenario(robot: RobotModel, k: CameraIntrinsics,
                      rng: np.random.Generator, seed: int = 0,
                      max_tries: int = 100) -> Scenario:
    """Sample a look-at camera on a spherical shell until the arm is visible."""
    q0 = None
    for _ in range(200):
        q = sample_joint_pose(robot, rng)
        if is_valid_pose(robot, q):
            q0 = q
            break
    if q0 is None:
        raise GenerationError("could not sample a valid initial joint pose")
    for _ in range(max_tries):
        radius = rng.uniform(0.8, 2.0)
        azimuth = rng.uniform(0.0, 2.0 * np.pi)
        elevation = rng.uniform(np.radians(10.0), np.radians(60.0))
        position = radius * np.array([
            np.cos(elevation) * np.cos(azimuth),
            np.cos(elevation) * np.sin(azimuth),
            np.sin(elevation),
        ])
        jitter_angle = rng.uniform(0.0, np.radians(10.0))
        jitter_axis = _unit_sphere(rng)
        up = rodrigues(jitter_axis * jitter_angle) @ np.array([0.0, 0.0, 1.0])
        t_cb = _look_at_camera(position, np.zeros(3), up)
        sc = Scenario(robot=robot, intrinsics=k, t_cb_true=t_cb, q0=q0, seed=seed)
        if arm_coverage(sc, q0) >= MIN_COVERAGE:
            return sc
    raise GenerationError(f"no visible camera pose found in {max_tries} tries")


def observe(sc: Scenario, q: np.ndarray, noise: NoiseModel,
            rng: np.random.Generator) -> np.ndarray:
    """Ground-truth hard render corrupted by morphology and pixel flips."""
    poses = forward_kinematics(sc.robot, q)
    links_cam = [
        transform_mesh(l.mesh, compose(sc.t_cb_true, p))
        for l, p in zip(sc.robot.links, poses)
    ]
    mask = render_hard_mask(links_cam, sc.intrinsics)
    r = noise.morph_radius
    if r != 0:
        structure = np.ones((2 * abs(r) + 1, 2 * abs(r) + 1), dtype=bool)
        binary = mask > 0.5
        if r > 0:
            binary = ndimage.binary_dilation(binary, structure=structure)
        else:
            binary = ndimage.binary_erosion(binary, structure=structure)
        mask = binary.astype(np.float64)
    if noise.flip_prob > 0:
        flips = rng.random(mask.shape) < noise.flip_prob
        mask = np.where(flips, 1.0 - mask, mask)
    return mask


def _initial_pose(sc: Scenario, init: InitMode, rng: np.random.Generator) -> Pose:
    if init.kind == "explicit":
        return init.pose
    truth = sc.t_cb_true
    axis = _unit_sphere(rng)
    d_rot = rodrigues(axis * np.radians(init.rot_deg))
    camera_distance = float(np.linalg.norm(truth.translation))
    d_trans = init.trans_frac * camera_distance * _unit_sphere(rng)
    return Pose(d_rot @ truth.rotation, truth.translation + d_trans)


def _sample_valid(robot: RobotModel, rng: np.random.Generator,
                  max_tries: int = 10000) -> np.ndarray:
    for _ in range(max_tries):
        q = sample_joint_pose(robot, rng)
        if is_valid_pose(robot, q):
            return q
    raise GenerationError("random selector found no valid joint pose")


def run_calibration_loop(sc: Scenario, n_views: int, selector: str,
                         opt_cfg: OptimizerConfig, exp_cfg: ExplorationConfig,
                         noise: NoiseModel, init_mode: InitMode) -> Report:
    """Observe / optimize / explore for n_views iterations.

    selector is "se" (variance-maximizing exploration) or "random" (valid
    random joint samples).  All randomness derives from sc.seed through
    per-purpose substreams, so SE and random runs share observations noise
    and initialization.
    """
    if n_views < 1:
        raise InvalidArgumentError("n_views must be >= 1")
    if selector not in ("se", "random"):
        raise InvalidArgumentError(f"unknown selector {selector!r}")
    ss = np.random.SeedSequence(sc.seed)
    rng_init, rng_noise, rng_select = (np.random.default_rng(s) for s in ss.spawn(3))
    window = (min(200, opt_cfg.steps // 2), opt_cfg.steps)
    start = time.perf_counter()
    current = _initial_pose(sc, init_mode, rng_init)
    q = sc.q0
    observations: list[Observation] = []
    entries: list[IterationResult] = []
    for view in range(1, n_views + 1):
        try:
            mask = observe(sc, q, noise, rng_noise)
            observations.append(Observation.create(sc.robot, q, mask))
            current, traj = optimize_pose(current, observations, sc.intrinsics, opt_cfg)
        except Exception as e:
            e.args = (f"iteration {view}: {e}",) + e.args[1:]
            raise
        entries.append(IterationResult(
            views=view,
            rotation_error_deg=rotation_error_deg(current, sc.t_cb_true),
            translation_error_cm=100.0 * translation_error(current, sc.t_cb_true),
            loss=min(s.loss for s in traj),
            pose=current,
        ))
        if view < n_views:
            if selector == "se":
                candidates = sample_pose_candidates(
                    traj, exp_cfg.n_candidates, window, rng_select)
                q, _ = select_next_joint_pose(
                    sc.robot, candidates, sc.intrinsics, exp_cfg, rng_select)
            else:
                q = _sample_valid(sc.robot, rng_select)
    return Report(selector=selector, entries=tuple(entries),
                  wall_time=time.perf_counter() - start)


def pck(errors, thresholds) -> list[float]:
    """Fraction of errors at or below each threshold (PCK curve)."""
    if len(errors) == 0:
        raise InvalidArgumentError("empty error list")
    if list(thresholds) != sorted(thresholds):
        raise InvalidArgumentError("thresholds must be sorted ascending")
    errors = np.asarray(errors, dtype=np.float64)
    return [float(np.mean(errors <= t)) for t in thresholds]


@dataclass(frozen=True)
class CellStats:
    """Aggregate errors for one grid cell at one view count."""

    views: int
    rot_mean: float
    rot_median: float
    rot_std: float
    trans_cm_mean: float
    trans_cm_median: float
    trans_cm_std: float
    n_scenes: int


@dataclass(frozen=True)
class CellResult:
    params: dict
    stats: tuple[CellStats, ...]
    failures: int
    reports: tuple = ()


def _run_cell_scene(robot, k, params, seed, opt_cfg, exp_cfg):
    rng = np.random.default_rng(seed)
    sc = generate_scenario(robot, k, rng, seed=seed)
    selector = params.get("selector", "se")
    noise = NoiseModel(flip_prob=params.get("flip_prob", 0.0),
                       morph_radius=params.get("morph_radius", 0))
    init_mode = InitMode()
    n_views = params.get("n_views", 1)
    if selector == "baseline":
        rng_b = np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0])
        n_poses = params.get("baseline_poses", 20)
        joint_poses = [sc.q0] + [_sample_valid(robot, rng_b) for _ in range(n_poses - 1)]
        pose = marker_calibrate(sc, joint_poses,
                                pixel_noise_sigma=params.get("pixel_noise", 0.0),
                                rng=rng_b)
        entry = IterationResult(
            views=n_poses,
            rotation_error_deg=rotation_error_deg(pose, sc.t_cb_true),
            translation_error_cm=100.0 * translation_error(pose, sc.t_cb_true),
            loss=float("nan"),
            pose=pose,
        )
        return Report(selector="baseline", entries=(entry,), wall_time=0.0)
    cfg = replace(opt_cfg)
    ecfg = replace(exp_cfg,
                   n_joint_samples=params.get("n_joint_samples", exp_cfg.n_joint_samples),
                   n_candidates=params.get("n_candidates", exp_cfg.n_candidates))
    return run_calibration_loop(sc, n_views, selector, cfg, ecfg, noise, init_mode)


def evaluate_batch(robot: RobotModel, k: CameraIntrinsics, n_scenes: int,
                   sweep: dict | None = None, base_params: dict | None = None,
                   opt_cfg: OptimizerConfig | None = None,
                   exp_cfg: ExplorationConfig | None = None,
                   seed0: int = 0, keep_reports: bool = False) -> list[CellResult]:
    """Run the calibration loop over a seeds x parameter-grid and aggregate.

    sweep maps parameter names to value lists; their cartesian product forms
    the grid.  Individual scene failures are recorded per cell, not fatal.
    Scenes run in parallel (capped by EASYHEC_THREADS) but are aggregated in
    seed order, so results are independent of the worker count.
    """
    if n_scenes < 1:
        raise InvalidArgumentError("n_scenes must be >= 1")
    sweep = sweep or {}
    base_params = base_params or {}
    opt_cfg = opt_cfg or OptimizerConfig()
    exp_cfg = exp_cfg or ExplorationConfig()
    keys = sorted(sweep.keys())
    grid = [dict(zip(keys, combo)) for combo in itertools.product(*(sweep[k] for k in keys))] or [{}]
    results = []
    for cell in grid:
        params = {**base_params, **cell}
        reports: list[Report | None] = [None] * n_scenes
        failures = 0
        with ThreadPoolExecutor(max_workers=worker_count()) as pool:
            futures = [
                pool.submit(_run_cell_scene, robot, k, params, seed0 + i, opt_cfg, exp_cfg)
                for i in range(n_scenes)
            ]
            for i, fut in enumerate(futures):
                try:
                    reports[i] = fut.result()
                except Exception as e:  # recorded, not fatal
                    log.warning("cell %s scene %d failed: %s", params, seed0 + i, e)
                    failures += 1
        ok = [r for r in reports if r is not None]
        stats = []
        if ok:
            for vi in range(len(ok[0].entries)):
                rot = np.array([r.entries[vi].rotation_error_deg for r in ok])
                trn = np.array([r.entries[vi].translation_error_cm for r in ok])
                stats.append(CellStats(
                    views=ok[0].entries[vi].views,
                    rot_mean=float(rot.mean()), rot_median=float(np.median(rot)),
                    rot_std=float(rot.std()),
                    trans_cm_mean=float(trn.mean()),
                    trans_cm_median=float(np.median(trn)),
                    trans_cm_std=float(trn.std()),
                    n_scenes=len(ok),
                ))
        results.append(CellResult(params=params, stats=tuple(stats), failures=failures,
                                  reports=tuple(ok) if keep_reports else ()))
    return results


CSV_HEADER = ("selector,n_views,n_joint_samples,n_candidates,pixel_noise,flip_prob,"
              "morph_radius,views,rot_mean,rot_median,rot_std,"
              "trans_cm_mean,trans_cm_median,trans_cm_std,n_scenes,failures")


def batch_to_csv(results: list[CellResult]) -> str:
    lines = [CSV_HEADER]
    for cell in results:
        p = cell.params
        prefix = (f"{p.get('selector', 'se')},{p.get('n_views', 1)},"
                  f"{p.get('n_joint_samples', '')},{p.get('n_candidates', '')},"
                  f"{p.get('pixel_noise', 0.0)},{p.get('flip_prob', 0.0)},"
                  f"{p.get('morph_radius', 0)}")
        for s in cell.stats:
            lines.append(f"{prefix},{s.views},{s.rot_mean:.9g},{s.rot_median:.9g},"
                         f"{s.rot_std:.9g},{s.trans_cm_mean:.9g},{s.trans_cm_median:.9g},"
                         f"{s.trans_cm_std:.9g},{s.n_scenes},{cell.failures}")
        if not cell.stats:
            lines.append(f"{prefix},,,,,,,,0,{cell.failures}")
    return "\n".join(lines) + "\n"


def batch_to_json(results: list[CellResult]) -> dict:
    return {
        "cells": [
            {
                "params": cell.params,
                "failures": cell.failures,
                "stats": [vars(s) for s in cell.stats],
            }
            for cell in results
        ]
    }
