"""Benchmark the compiled rasterization kernels against the numpy fallback.

Run:
    python benchmarks/benchmark_backends.py [--repeats N]

Times the three hot kernels (soft forward, soft backward, hard mask) and the
fused exploration kernel on the bundled fixture arm, and checks that both
backends agree numerically.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from easyhec import harness, kinematics
from easyhec.data import fixture_robot_path
from easyhec.mesh import transform_mesh
from easyhec.render import CameraIntrinsics, _kernels_py, softraster
from easyhec.se3 import compose

try:
    from easyhec.render import _kernels_cy
except ImportError:
    _kernels_cy = None


def _scene(width: int, height: int):
    model = kinematics.load_robot_model(fixture_robot_path())
    k = CameraIntrinsics(fx=1.25 * width, fy=1.25 * width, cx=width / 2.0,
                         cy=height / 2.0, width=width, height=height)
    rng = np.random.default_rng(11)
    sc = harness.generate_scenario(model, k, rng, seed=11)
    poses = kinematics.forward_kinematics(model, sc.q0)
    links_cam = [transform_mesh(l.mesh, compose(sc.t_cb_true, p))
                 for l, p in zip(model.links, poses)]
    return k, softraster.flatten_scene(links_cam, k)


def _time(fn, repeats: int) -> float:
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best * 1e3


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--width", type=int, default=320)
    parser.add_argument("--height", type=int, default=240)
    args = parser.parse_args()

    k, (verts, z, tris, tri_link, n_links) = _scene(args.width, args.height)
    sigma_eff = 1e-4 * k.diagonal**2
    min_area = 1e-12 * k.diagonal**2
    cutoff = softraster.CUTOFF
    h, w = k.height, k.width
    pixw = np.random.default_rng(0).normal(size=(h, w))
    backends = [("python", _kernels_py)]
    if _kernels_cy is not None:
        backends.append(("cython", _kernels_cy))

    results = {}
    for name, kern in backends:
        P = np.ones((n_links, h, w))
        kern.soft_products(verts, tris, tri_link, sigma_eff, cutoff, min_area, P)
        grad = np.zeros((len(verts), 2))
        kern.soft_backward(verts, tris, tri_link, sigma_eff, cutoff, min_area,
                           P, pixw, grad)
        mask = np.zeros((h, w))
        kern.hard_mask(verts, tris, min_area, mask)
        results[name] = (P.copy(), grad.copy(), mask.copy())

        t_fwd = _time(lambda: kern.soft_products(
            verts, tris, tri_link, sigma_eff, cutoff, min_area,
            np.ones((n_links, h, w))), args.repeats)
        t_bwd = _time(lambda: kern.soft_backward(
            verts, tris, tri_link, sigma_eff, cutoff, min_area, P, pixw,
            np.zeros((len(verts), 2))), args.repeats)
        t_hard = _time(lambda: kern.hard_mask(
            verts, tris, min_area, np.zeros((h, w))), args.repeats)

        n_k = 8
        verts_k = np.repeat(verts[None], n_k, axis=0)
        z_k = np.repeat(z[None], n_k, axis=0)
        t_var = _time(lambda: kern.soft_variance_accum(
            verts_k, z_k, 0.01, tris, tri_link, n_links, h, w,
            sigma_eff, cutoff, min_area, np.zeros((h, w)), np.zeros((h, w))),
            args.repeats)
        print(f"{name:>7}: forward {t_fwd:8.2f} ms | backward {t_bwd:8.2f} ms | "
              f"hard {t_hard:7.2f} ms | variance x{n_k} {t_var:8.2f} ms")

    if len(results) == 2:
        p_py, g_py, m_py = results["python"]
        p_cy, g_cy, m_cy = results["cython"]
        print(f"max |forward diff| {np.abs(p_py - p_cy).max():.3e}, "
              f"|backward diff| {np.abs(g_py - g_cy).max():.3e}, "
              f"|hard diff| {np.abs(m_py - m_cy).max():.3e}")
    else:
        print("compiled backend unavailable; benchmarked the fallback only")


if __name__ == "__main__":
    main()
