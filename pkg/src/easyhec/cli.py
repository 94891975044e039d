"""Command-line front end.

Commands: calibrate, simulate, evaluate, explore, baseline, overlay.

Configuration comes from an optional JSON file (--config) with flat sections
per module; individual flags override config values.  ``--dump-config``
prints the effective configuration as JSON and exits, and dumped output
parses back to the same configuration (fixed point).

Exit codes:
  0  success, all requested outputs written
  2  usage error or invalid configuration
  3  missing or unreadable input file
  4  dimension mismatch (mask size vs intrinsics)
  5  input length mismatch (e.g. masks vs joint poses)
  6  numerical failure, degenerate input, or exhausted sampling
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from .data import fixture_robot_path
from .errors import (BehindCameraError, DegenerateGeometryError,
                     DimensionMismatchError, EasyHecError, ExhaustionError,
                     GenerationError, InvalidArgumentError, NonConvergenceError,
                     NumericalError, ParseError, ValidationError,
                     VisibilityError)
from .se3 import Pose, compose, rotation_error_deg, translation_error
from .mesh import transform_mesh
from .kinematics import forward_kinematics, load_robot_model
from .render import CameraIntrinsics, render_hard_mask, render_soft_mask
from .optimize import Observation, OptimizerConfig, optimize_pose, calibration_loss
from .explore import ExplorationConfig, select_next_joint_pose
from .baseline import marker_calibrate
from . import harness, maskio

EXIT_USAGE = 2
EXIT_IO = 3
EXIT_DIMENSION = 4
EXIT_LENGTH = 5
EXIT_NUMERIC = 6


class LengthMismatchError(EasyHecError):
    """Input sequences that must pair up have different lengths."""


_DEFAULT_CONFIG = {
    "robot": None,  # None -> bundled fixture arm
    "seed": 0,
    "output_dir": ".",
    "intrinsics": {"fx": 400.0, "fy": 400.0, "cx": 160.0, "cy": 120.0,
                   "width": 320, "height": 240, "near": 0.01},
    "optimizer": {"learning_rate": 3e-3, "steps": 1000, "beta1": 0.9,
                  "beta2": 0.999, "epsilon": 1e-8, "sigma": 1e-4,
                  "sigma_final": 1e-6, "snapshot_every": 1},
    "exploration": {"n_joint_samples": 2000, "n_candidates": 50,
                    "render_width": 64, "render_height": 64, "sigma": 1e-4},
    "noise": {"flip_prob": 0.0, "morph_radius": 0},
}

# flag destination -> (section, key) in the config tree
_FLAG_MAP = {
    "robot": (None, "robot"),
    "seed": (None, "seed"),
    "out": (None, "output_dir"),
    "fx": ("intrinsics", "fx"), "fy": ("intrinsics", "fy"),
    "cx": ("intrinsics", "cx"), "cy": ("intrinsics", "cy"),
    "width": ("intrinsics", "width"), "height": ("intrinsics", "height"),
    "lr": ("optimizer", "learning_rate"), "steps": ("optimizer", "steps"),
    "sigma": ("optimizer", "sigma"), "sigma_final": ("optimizer", "sigma_final"),
    "snapshot_every": ("optimizer", "snapshot_every"),
    "samples": ("exploration", "n_joint_samples"),
    "candidate_count": ("exploration", "n_candidates"),
    "flip_prob": ("noise", "flip_prob"),
    "morph_radius": ("noise", "morph_radius"),
}


def _merge_config(path: str | None, args: argparse.Namespace) -> dict:
    cfg = json.loads(json.dumps(_DEFAULT_CONFIG))  # deep copy
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                user = json.load(fh)
        except OSError as e:
            raise ParseError(f"cannot read config {path}: {e}")
        except json.JSONDecodeError as e:
            raise InvalidArgumentError(f"config {path} is not valid JSON: {e}")
        if not isinstance(user, dict):
            raise InvalidArgumentError(f"config {path} must be a JSON object")
        for key, value in user.items():
            if key in ("intrinsics", "optimizer", "exploration", "noise"):
                if isinstance(value, str):  # intrinsics may be a file path
                    with open(value, "r", encoding="utf-8") as fh:
                        value = json.load(fh)
                if not isinstance(value, dict):
                    raise InvalidArgumentError(f"config section {key} must be an object")
                unknown = set(value) - set(cfg[key])
                if unknown:
                    raise InvalidArgumentError(
                        f"config section {key}: unknown fields {sorted(unknown)}")
                cfg[key].update(value)
            elif key in cfg:
                cfg[key] = value
            else:
                raise InvalidArgumentError(f"unknown config key {key!r}")
    for dest, (section, key) in _FLAG_MAP.items():
        value = getattr(args, dest, None)
        if value is not None:
            if section is None:
                cfg[key] = value
            else:
                cfg[section][key] = value
    return cfg


def _intrinsics(cfg: dict) -> CameraIntrinsics:
    c = cfg["intrinsics"]
    return CameraIntrinsics(fx=float(c["fx"]), fy=float(c["fy"]),
                            cx=float(c["cx"]), cy=float(c["cy"]),
                            width=int(c["width"]), height=int(c["height"]),
                            near=float(c.get("near", 0.01)))


def _robot(cfg: dict):
    path = cfg["robot"] or fixture_robot_path()
    return load_robot_model(path)


def _opt_cfg(cfg: dict) -> OptimizerConfig:
    o = cfg["optimizer"]
    sf = o.get("sigma_final")
    return OptimizerConfig(learning_rate=float(o["learning_rate"]),
                           steps=int(o["steps"]), beta1=float(o["beta1"]),
                           beta2=float(o["beta2"]), epsilon=float(o["epsilon"]),
                           sigma=float(o["sigma"]),
                           sigma_final=None if sf is None else float(sf),
                           snapshot_every=int(o["snapshot_every"]))


def _exp_cfg(cfg: dict) -> ExplorationConfig:
    e = cfg["exploration"]
    return ExplorationConfig(n_joint_samples=int(e["n_joint_samples"]),
                             n_candidates=int(e["n_candidates"]),
                             render_width=int(e["render_width"]),
                             render_height=int(e["render_height"]),
                             sigma=float(e["sigma"]))


def _noise(cfg: dict) -> harness.NoiseModel:
    n = cfg["noise"]
    return harness.NoiseModel(flip_prob=float(n["flip_prob"]),
                              morph_radius=int(n["morph_radius"]))


def _load_json(path: str):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as e:
        raise ParseError(f"cannot read {path}: {e}")
    except json.JSONDecodeError as e:
        raise ParseError(f"{path} is not valid JSON: {e}")


def _load_pose(path: str) -> Pose:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise ParseError(f"cannot read {path}: {e}")
    try:
        return Pose.from_json(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"{path} is not valid JSON: {e}")


def _load_joints(path: str, n_joints: int) -> list[np.ndarray]:
    obj = _load_json(path)
    if not isinstance(obj, list) or not all(isinstance(row, list) for row in obj):
        raise ParseError(f"{path}: joint poses must be a JSON array of arrays")
    out = []
    for i, row in enumerate(obj):
        if len(row) != n_joints:
            raise DimensionMismatchError(
                f"{path}: pose {i} has {len(row)} joints, robot has {n_joints}")
        out.append(np.asarray(row, dtype=np.float64))
    return out


def _write_json(path: str, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_pose(path: str, pose: Pose) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(pose.to_json() + "\n")


def _outdir(cfg: dict) -> str:
    d = cfg["output_dir"]
    os.makedirs(d, exist_ok=True)
    return d


def _dump_config(cfg: dict) -> int:
    print(json.dumps(cfg, indent=2, sort_keys=True))
    return 0


def cmd_calibrate(cfg: dict, args: argparse.Namespace) -> int:
    robot = _robot(cfg)
    k = _intrinsics(cfg)
    joints = _load_joints(args.joints, robot.n_joints)
    if len(args.masks) != len(joints):
        raise LengthMismatchError(
            f"{len(args.masks)} masks but {len(joints)} joint poses")
    if not joints:
        raise InvalidArgumentError("need at least one mask/joint pair")
    init = _load_pose(args.init)
    observations = []
    for path, q in zip(args.masks, joints):
        mask = maskio.read_mask(path)
        if mask.shape != (k.height, k.width):
            raise DimensionMismatchError(
                f"{path}: mask {mask.shape[::-1]} does not match "
                f"intrinsics {(k.width, k.height)}")
        observations.append(Observation.create(robot, q, mask))
    opt = _opt_cfg(cfg)
    initial_loss = calibration_loss(init, observations, k, opt.sigma)
    pose, traj = optimize_pose(init, observations, k, opt)
    out = _outdir(cfg)
    pose_path = os.path.join(out, "pose.json")
    traj_path = os.path.join(out, "trajectory.jsonl")
    summary_path = os.path.join(out, "summary.json")
    _write_pose(pose_path, pose)
    with open(traj_path, "w", encoding="utf-8") as fh:
        for s in traj:
            fh.write(json.dumps({"step": s.step, "loss": s.loss, "sigma": s.sigma,
                                 "matrix": json.loads(s.pose.to_json())["matrix"]}) + "\n")
    final_sigma = opt.sigma_at(opt.steps - 1)
    per_view = [calibration_loss(pose, [o], k, final_sigma) for o in observations]
    final_loss = float(np.mean(per_view))
    _write_json(summary_path, {
        "initial_loss": initial_loss,
        "final_loss": final_loss,
        "per_view_loss": per_view,
        "views": len(observations),
        "steps": opt.steps,
    })
    print(f"wrote {pose_path} (final loss {final_loss:.6e})")
    return 0


def cmd_simulate(cfg: dict, args: argparse.Namespace) -> int:
    """Generate a synthetic scenario: masks, joints, truth and initial pose."""
    robot = _robot(cfg)
    k = _intrinsics(cfg)
    seed = int(cfg["seed"])
    rng = np.random.default_rng(seed)
    sc = harness.generate_scenario(robot, k, rng, seed=seed)
    noise = _noise(cfg)
    ss = np.random.SeedSequence(seed)
    rng_init, rng_noise, rng_select = (np.random.default_rng(s) for s in ss.spawn(3))
    init = harness._initial_pose(
        sc, harness.InitMode(kind="perturb", rot_deg=args.init_rot_deg,
                             trans_frac=args.init_trans_frac), rng_init)
    qs = [sc.q0]
    for _ in range(args.views - 1):
        qs.append(harness._sample_valid(robot, rng_select))
    out = _outdir(cfg)
    mask_paths = []
    for i, q in enumerate(qs):
        mask = harness.observe(sc, q, noise, rng_noise)
        path = os.path.join(out, f"mask_{i:03d}.pgm")
        maskio.write_pgm(path, mask)
        mask_paths.append(path)
    _write_json(os.path.join(out, "joints.json"), [list(map(float, q)) for q in qs])
    _write_pose(os.path.join(out, "truth_pose.json"), sc.t_cb_true)
    _write_pose(os.path.join(out, "init_pose.json"), init)
    print(f"wrote {len(qs)} masks, joints.json, truth_pose.json, init_pose.json in {out}")
    return 0


def _parse_sweep(items: list[str]) -> dict:
    sweep = {}
    for item in items:
        if "=" not in item:
            raise InvalidArgumentError(f"sweep {item!r} must look like key=v1,v2")
        key, _, values = item.partition("=")
        parsed = []
        for v in values.split(","):
            try:
                parsed.append(json.loads(v))
            except json.JSONDecodeError:
                parsed.append(v)
        sweep[key] = parsed
    return sweep


def cmd_evaluate(cfg: dict, args: argparse.Namespace) -> int:
    robot = _robot(cfg)
    k = _intrinsics(cfg)
    noise = _noise(cfg)
    selectors = args.selectors.split(",")
    for s in selectors:
        if s not in ("se", "random", "baseline"):
            raise InvalidArgumentError(f"unknown selector {s!r}")
    sweep = {"selector": selectors}
    sweep.update(_parse_sweep(args.sweep))
    base_params = {
        "n_views": args.views,
        "flip_prob": noise.flip_prob,
        "morph_radius": noise.morph_radius,
        "pixel_noise": args.noise_px,
        "baseline_poses": args.baseline_poses,
    }
    results = harness.evaluate_batch(
        robot, k, n_scenes=args.scenes, sweep=sweep, base_params=base_params,
        opt_cfg=_opt_cfg(cfg), exp_cfg=_exp_cfg(cfg), seed0=int(cfg["seed"]))
    out = _outdir(cfg)
    csv_path = os.path.join(out, "report.csv")
    json_path = os.path.join(out, "report.json")
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write(harness.batch_to_csv(results))
    _write_json(json_path, harness.batch_to_json(results))
    print(f"wrote {csv_path} and {json_path}")
    return 0


def cmd_explore(cfg: dict, args: argparse.Namespace) -> int:
    robot = _robot(cfg)
    k = _intrinsics(cfg)
    obj = _load_json(args.candidates)
    if isinstance(obj, dict):
        obj = obj.get("poses", obj)
    if not isinstance(obj, list) or len(obj) < 2:
        raise InvalidArgumentError("candidates file must hold >= 2 poses")
    candidates = [Pose.from_json(json.dumps(p)) for p in obj]
    rng = np.random.default_rng(int(cfg["seed"]))
    q, score = select_next_joint_pose(robot, candidates, k, _exp_cfg(cfg), rng)
    out = _outdir(cfg)
    path = os.path.join(out, "next_pose.json")
    _write_json(path, {"q": list(map(float, q)), "score": score})
    print(f"wrote {path} (variance score {score:.6e})")
    return 0


def cmd_baseline(cfg: dict, args: argparse.Namespace) -> int:
    """Marker-based calibration (PnP + AX=XB) on a synthetic scenario."""
    robot = _robot(cfg)
    k = _intrinsics(cfg)
    seed = int(cfg["seed"])
    rng = np.random.default_rng(seed)
    sc = harness.generate_scenario(robot, k, rng, seed=seed)
    rng_b = np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0])
    joint_poses = [sc.q0] + [harness._sample_valid(robot, rng_b)
                             for _ in range(args.poses - 1)]
    pose = marker_calibrate(sc, joint_poses, pixel_noise_sigma=args.noise_px,
                            rng=rng_b)
    out = _outdir(cfg)
    _write_pose(os.path.join(out, "baseline_pose.json"), pose)
    summary = {
        "rotation_error_deg": rotation_error_deg(pose, sc.t_cb_true),
        "translation_error_cm": 100.0 * translation_error(pose, sc.t_cb_true),
        "poses": args.poses,
        "pixel_noise": args.noise_px,
    }
    _write_json(os.path.join(out, "baseline_summary.json"), summary)
    print(f"baseline: {summary['rotation_error_deg']:.4f} deg, "
          f"{summary['translation_error_cm']:.4f} cm")
    return 0


def cmd_overlay(cfg: dict, args: argparse.Namespace) -> int:
    """Render soft+hard masks at a pose; diff against an observed mask."""
    robot = _robot(cfg)
    k = _intrinsics(cfg)
    pose = _load_pose(args.pose)
    q = _load_joints(args.q, robot.n_joints)
    if len(q) != 1:
        raise InvalidArgumentError("overlay expects exactly one joint pose")
    links = forward_kinematics(robot, q[0])
    links_cam = [transform_mesh(l.mesh, compose(pose, p))
                 for l, p in zip(robot.links, links)]
    soft = render_soft_mask(links_cam, k, float(cfg["optimizer"]["sigma"]))
    hard = render_hard_mask(links_cam, k)
    out = _outdir(cfg)
    maskio.write_pgm(os.path.join(out, "soft.pgm"), soft)
    maskio.write_pgm(os.path.join(out, "hard.pgm"), hard)
    if args.observed is not None:
        observed = maskio.read_mask(args.observed)
        if observed.shape != hard.shape:
            raise DimensionMismatchError(
                f"{args.observed}: mask {observed.shape[::-1]} does not match "
                f"intrinsics {(k.width, k.height)}")
        r = hard > 0.5
        o = observed > 0.5
        # 3-level diff: 0 = agreement, 128 = rendered only, 255 = observed only
        diff = np.zeros(hard.shape, dtype=np.float64)
        diff[r & ~o] = 128.0 / 255.0
        diff[o & ~r] = 1.0
        maskio.write_pgm(os.path.join(out, "diff.pgm"), diff)
        union = np.count_nonzero(r | o)
        iou = float(np.count_nonzero(r & o) / union) if union else 1.0
        print(f"iou {iou:.6f}")
    print(f"wrote overlays in {out}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="easyhec",
        description="Markerless eye-to-hand calibration via differentiable "
                    "silhouette rendering.",
        epilog=__doc__.split("Exit codes:")[1].join(["Exit codes:", ""]),
        formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--dump-config", action="store_true",
                       help="print the effective config as JSON and exit")
        p.add_argument("--robot", help="robot model JSON (default: bundled arm)")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")
        for flag in ("fx", "fy", "cx", "cy"):
            p.add_argument(f"--{flag}", type=float)
        p.add_argument("--width", type=int)
        p.add_argument("--height", type=int)
        p.add_argument("--lr", type=float, help="optimizer learning rate")
        p.add_argument("--steps", type=int, help="optimizer steps")
        p.add_argument("--sigma", type=float, help="starting render temperature")
        p.add_argument("--sigma-final", dest="sigma_final", type=float)
        p.add_argument("--snapshot-every", dest="snapshot_every", type=int)
        p.add_argument("--samples", type=int, help="exploration joint samples")
        p.add_argument("--candidate-count", dest="candidate_count", type=int,
                       help="exploration camera-pose candidates")
        p.add_argument("--flip-prob", dest="flip_prob", type=float)
        p.add_argument("--morph-radius", dest="morph_radius", type=int)

    p = sub.add_parser("calibrate", help="optimize T_cb from masks + joints")
    common(p)
    p.add_argument("--masks", nargs="+", required=True)
    p.add_argument("--joints", required=True, help="JSON array of joint arrays")
    p.add_argument("--init", required=True, help="initial pose JSON")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("simulate", help="generate a synthetic scenario to disk")
    common(p)
    p.add_argument("--views", type=int, default=3)
    p.add_argument("--init-rot-deg", type=float, default=10.0)
    p.add_argument("--init-trans-frac", type=float, default=0.1)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("evaluate", help="closed-loop benchmark -> CSV/JSON report")
    common(p)
    p.add_argument("--scenes", type=int, default=5)
    p.add_argument("--views", type=int, default=3)
    p.add_argument("--selectors", default="se",
                   help="comma list from {se,random,baseline}")
    p.add_argument("--noise-px", dest="noise_px", type=float, default=0.0,
                   help="marker pixel noise for the baseline selector")
    p.add_argument("--baseline-poses", dest="baseline_poses", type=int, default=20)
    p.add_argument("--sweep", action="append", default=[],
                   metavar="KEY=V1,V2", help="sweep a harness parameter")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("explore", help="select next joint pose from candidates")
    common(p)
    p.add_argument("--candidates", required=True,
                   help="JSON list of camera pose candidates")
    p.set_defaults(func=cmd_explore)

    p = sub.add_parser("baseline", help="marker-based calibration on a scenario")
    common(p)
    p.add_argument("--poses", type=int, default=20)
    p.add_argument("--noise-px", dest="noise_px", type=float, default=0.0)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("overlay", help="render diagnostic overlays for a pose")
    common(p)
    p.add_argument("--pose", required=True, help="pose JSON")
    p.add_argument("--q", required=True, help="JSON array holding one joint array")
    p.add_argument("--observed", help="observed mask to diff against")
    p.set_defaults(func=cmd_overlay)
    return parser


_EXIT_BY_ERROR = (
    (LengthMismatchError, EXIT_LENGTH),
    (DimensionMismatchError, EXIT_DIMENSION),
    (ParseError, EXIT_IO),
    ((NumericalError, DegenerateGeometryError, ExhaustionError,
      NonConvergenceError, VisibilityError, BehindCameraError,
      GenerationError), EXIT_NUMERIC),
    ((InvalidArgumentError, ValidationError), EXIT_USAGE),
    (OSError, EXIT_IO),
)


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _merge_config(args.config, args)
        if args.dump_config:
            return _dump_config(cfg)
        return args.func(cfg, args)
    except Exception as e:
        for classes, code in _EXIT_BY_ERROR:
            if isinstance(e, classes):
                print(f"error: {e}", file=sys.stderr)
                return code
        raise


if __name__ == "__main__":
    sys.exit(main())
