import json
import os

import numpy as np
import pytest

from easyhec.cli import main
from easyhec.harness import NoiseModel, generate_scenario, observe
from easyhec.kinematics import forward_kinematics, load_robot_model
from easyhec.maskio import read_mask, write_pgm
from easyhec.mesh import transform_mesh
from easyhec.render import render_hard_mask
from easyhec.se3 import Pose, compose, rotation_error_deg, translation_error


def small_flags(out, seed=0):
    return ["--out", str(out), "--seed", str(seed),
            "--width", "160", "--height", "120",
            "--fx", "200", "--fy", "200", "--cx", "80", "--cy", "60"]


def write_scene(tmp_path, seed=0, n_views=2, perturb=None):
    """Render views of the fixture arm at a generated scenario to disk."""
    from easyhec.data import fixture_robot_path
    from easyhec.render import CameraIntrinsics
    robot = load_robot_model(fixture_robot_path())
    k = CameraIntrinsics(fx=200.0, fy=200.0, cx=80.0, cy=60.0,
                         width=160, height=120)
    sc = generate_scenario(robot, k, np.random.default_rng(seed), seed=seed)
    rng = np.random.default_rng(seed + 100)
    from easyhec.kinematics import sample_joint_pose
    qs = [sc.q0] + [sample_joint_pose(robot, rng) for _ in range(n_views - 1)]
    mask_paths = []
    for i, q in enumerate(qs):
        mask = observe(sc, q, NoiseModel(), rng)
        p = str(tmp_path / f"mask_{i}.pgm")
        write_pgm(p, mask)
        mask_paths.append(p)
    joints_path = str(tmp_path / "joints.json")
    with open(joints_path, "w") as fh:
        json.dump([list(q) for q in qs], fh)
    init = sc.t_cb_true if perturb is None else compose(perturb, sc.t_cb_true)
    init_path = str(tmp_path / "init.json")
    with open(init_path, "w") as fh:
        fh.write(init.to_json())
    return sc, mask_paths, joints_path, init_path


class TestCalibrate:
    def test_truth_init_recovers_pose(self, tmp_path):
        sc, masks, joints, init = write_scene(tmp_path, seed=1)
        out = tmp_path / "out"
        code = main(["calibrate", *small_flags(out), "--steps", "50",
                     "--masks", *masks, "--joints", joints, "--init", init])
        assert code == 0
        pose = Pose.from_json((out / "pose.json").read_text())
        assert rotation_error_deg(pose, sc.t_cb_true) < 1e-3
        assert translation_error(pose, sc.t_cb_true) < 1e-5
        summary = json.loads((out / "summary.json").read_text())
        assert summary["views"] == 2
        assert summary["final_loss"] <= summary["initial_loss"] + 1e-12
        lines = (out / "trajectory.jsonl").read_text().strip().split("\n")
        assert len(lines) == 51  # one per step plus the final snapshot
        first = json.loads(lines[0])
        assert set(first) == {"step", "loss", "sigma", "matrix"}

    def test_descent_from_perturbed_init(self, tmp_path):
        from easyhec.se3 import Twist, exp_twist
        bump = exp_twist(Twist.from_array(
            np.array([0.03, -0.02, 0.04, 0.01, -0.01, 0.02])))
        sc, masks, joints, init = write_scene(tmp_path, seed=2, n_views=3,
                                              perturb=bump)
        out = tmp_path / "out"
        code = main(["calibrate", *small_flags(out), "--steps", "120",
                     "--masks", *masks, "--joints", joints, "--init", init])
        assert code == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["final_loss"] < summary["initial_loss"]

    def test_mask_count_mismatch_exit_5(self, tmp_path):
        sc, masks, joints, init = write_scene(tmp_path, seed=3)
        out = tmp_path / "out"
        code = main(["calibrate", *small_flags(out),
                     "--masks", masks[0], "--joints", joints, "--init", init])
        assert code == 5
        assert not (out / "pose.json").exists()

    def test_mask_size_mismatch_exit_4(self, tmp_path):
        sc, masks, joints, init = write_scene(tmp_path, seed=4)
        bad = tmp_path / "bad.pgm"
        write_pgm(str(bad), np.zeros((32, 32)))
        out = tmp_path / "out"
        code = main(["calibrate", *small_flags(out),
                     "--masks", str(bad), masks[1], "--joints", joints,
                     "--init", init])
        assert code == 4
        assert not (out / "pose.json").exists()

    def test_missing_mask_file_exit_3(self, tmp_path):
        sc, masks, joints, init = write_scene(tmp_path, seed=5)
        out = tmp_path / "out"
        code = main(["calibrate", *small_flags(out),
                     "--masks", masks[0], str(tmp_path / "nope.pgm"),
                     "--joints", joints, "--init", init])
        assert code == 3


class TestSimulateAndRoundTrip:
    def test_simulate_outputs(self, tmp_path):
        out = tmp_path / "sim"
        code = main(["simulate", *small_flags(out, seed=6), "--views", "2"])
        assert code == 0
        assert (out / "truth_pose.json").exists()
        assert (out / "init_pose.json").exists()
        qs = json.loads((out / "joints.json").read_text())
        assert len(qs) == 2
        m = read_mask(str(out / "mask_000.pgm"))
        assert m.shape == (120, 160)
        assert m.sum() > 0

    def test_simulate_then_calibrate_round_trip(self, tmp_path):
        out = tmp_path / "sim"
        main(["simulate", *small_flags(out, seed=7), "--views", "2"])
        masks = sorted(str(p) for p in out.glob("mask_*.pgm"))
        cal = tmp_path / "cal"
        code = main(["calibrate", *small_flags(cal, seed=7), "--steps", "300",
                     "--masks", *masks,
                     "--joints", str(out / "joints.json"),
                     "--init", str(out / "truth_pose.json")])
        assert code == 0
        truth = Pose.from_json((out / "truth_pose.json").read_text())
        est = Pose.from_json((cal / "pose.json").read_text())
        assert rotation_error_deg(est, truth) < 1e-3


class TestEvaluate:
    def _run(self, out, seed=8):
        return main(["evaluate", *small_flags(out, seed=seed),
                     "--scenes", "2", "--views", "1",
                     "--selectors", "se,random",
                     "--steps", "20", "--samples", "4",
                     "--candidate-count", "3"])

    def test_report_rows_and_determinism(self, tmp_path, monkeypatch):
        outs = []
        for sub, threads in (("a", "1"), ("b", "4")):
            monkeypatch.setenv("EASYHEC_THREADS", threads)
            out = tmp_path / sub
            assert self._run(out) == 0
            outs.append((out / "report.csv").read_bytes())
        assert outs[0] == outs[1]  # byte-identical across worker counts
        lines = outs[0].decode().strip().split("\n")
        assert len(lines) == 3  # header + one row per selector
        assert {l.split(",")[0] for l in lines[1:]} == {"se", "random"}

    def test_sweep_flag(self, tmp_path):
        out = tmp_path / "sweep"
        code = main(["evaluate", *small_flags(out, seed=9),
                     "--scenes", "1", "--views", "1", "--selectors", "random",
                     "--steps", "10", "--samples", "3", "--candidate-count", "3",
                     "--sweep", "flip_prob=0.0,0.05"])
        assert code == 0
        rep = json.loads((out / "report.json").read_text())
        probs = {c["params"]["flip_prob"] for c in rep["cells"]}
        assert probs == {0.0, 0.05}

    def test_bad_sweep_value_exit_2(self, tmp_path):
        out = tmp_path / "bad"
        code = main(["evaluate", *small_flags(out), "--sweep", "nonsense"])
        assert code == 2


class TestExplore:
    def test_matches_library_and_score_zero_when_identical(self, tmp_path):
        sim = tmp_path / "sim"
        main(["simulate", *small_flags(sim, seed=10), "--views", "1"])
        truth = json.loads((sim / "truth_pose.json").read_text())
        cands = tmp_path / "cands.json"
        cands.write_text(json.dumps([truth, truth]))
        out = tmp_path / "out"
        code = main(["explore", *small_flags(out, seed=10),
                     "--candidates", str(cands), "--samples", "5",
                     "--candidate-count", "2"])
        assert code == 0
        res = json.loads((out / "next_pose.json").read_text())
        assert res["score"] == pytest.approx(0.0, abs=1e-12)
        assert len(res["q"]) == 6

    def test_single_candidate_exit_2(self, tmp_path):
        sim = tmp_path / "sim"
        main(["simulate", *small_flags(sim, seed=11), "--views", "1"])
        truth = json.loads((sim / "truth_pose.json").read_text())
        cands = tmp_path / "cands.json"
        cands.write_text(json.dumps([truth]))
        code = main(["explore", *small_flags(tmp_path / "o", seed=11),
                     "--candidates", str(cands)])
        assert code == 2


class TestBaseline:
    def test_noiseless_baseline_accurate(self, tmp_path):
        out = tmp_path / "b"
        code = main(["baseline", *small_flags(out, seed=12), "--poses", "30"])
        assert code == 0
        summary = json.loads((out / "baseline_summary.json").read_text())
        assert summary["rotation_error_deg"] < 1e-4
        assert summary["translation_error_cm"] < 1e-3


class TestOverlay:
    def test_iou_one_at_truth(self, tmp_path):
        sim = tmp_path / "sim"
        main(["simulate", *small_flags(sim, seed=13), "--views", "1"])
        qs = json.loads((sim / "joints.json").read_text())
        qpath = tmp_path / "q.json"
        qpath.write_text(json.dumps([qs[0]]))
        out = tmp_path / "out"
        code = main(["overlay", *small_flags(out, seed=13),
                     "--pose", str(sim / "truth_pose.json"),
                     "--q", str(qpath),
                     "--observed", str(sim / "mask_000.pgm")])
        assert code == 0
        diff = read_mask(str(out / "diff.pgm"))
        assert diff.max() == 0.0  # exact agreement at the true pose

    def test_iou_pixel_count_oracle(self, tmp_path, capsys):
        sim = tmp_path / "sim"
        main(["simulate", *small_flags(sim, seed=14), "--views", "1"])
        qs = json.loads((sim / "joints.json").read_text())
        qpath = tmp_path / "q.json"
        qpath.write_text(json.dumps([qs[0]]))
        # translate the pose 10 cm so the silhouettes misalign
        truth = Pose.from_json((sim / "truth_pose.json").read_text())
        moved = compose(Pose(np.eye(3), np.array([0.1, 0.0, 0.0])), truth)
        mpath = tmp_path / "moved.json"
        mpath.write_text(moved.to_json())
        out = tmp_path / "out"
        code = main(["overlay", *small_flags(out, seed=14),
                     "--pose", str(mpath), "--q", str(qpath),
                     "--observed", str(sim / "mask_000.pgm")])
        assert code == 0
        printed = capsys.readouterr().out
        iou_line = [l for l in printed.splitlines() if l.startswith("iou ")][0]
        iou = float(iou_line.split()[1])
        hard = read_mask(str(out / "hard.pgm")) > 0.5
        obs = read_mask(str(sim / "mask_000.pgm")) > 0.5
        expected = np.count_nonzero(hard & obs) / np.count_nonzero(hard | obs)
        assert iou == pytest.approx(expected, abs=1e-6)
        assert iou < 1.0


class TestConfig:
    def test_dump_config_fixed_point(self, tmp_path, capsys):
        code = main(["calibrate", "--dump-config",
                     "--masks", "x", "--joints", "y", "--init", "z"])
        assert code == 0
        dumped = capsys.readouterr().out
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(dumped)
        code = main(["calibrate", "--dump-config", "--config", str(cfg_path),
                     "--masks", "x", "--joints", "y", "--init", "z"])
        assert code == 0
        assert capsys.readouterr().out == dumped

    def test_unknown_config_key_exit_2(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"optimizer": {"bogus": 1}}))
        code = main(["calibrate", "--config", str(cfg),
                     "--masks", "x", "--joints", "y", "--init", "z"])
        assert code == 2

    def test_flag_overrides_config(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"optimizer": {"steps": 77}}))
        code = main(["calibrate", "--dump-config", "--config", str(cfg),
                     "--steps", "33",
                     "--masks", "x", "--joints", "y", "--init", "z"])
        assert code == 0
        dumped = json.loads(capsys.readouterr().out)
        assert dumped["optimizer"]["steps"] == 33

    def test_console_entry_point(self):
        import subprocess
        import sys
        r = subprocess.run([sys.executable, "-m", "easyhec.cli", "--help"],
                           capture_output=True, text=True)
        assert r.returncode == 0
        assert "calibrate" in r.stdout
