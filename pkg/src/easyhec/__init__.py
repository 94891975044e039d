"""EasyHeC-style markerless eye-to-hand calibration.

Recovers the camera-from-robot-base transform by differentiable silhouette
rendering, with consistency-based joint-space exploration to pick the next
robot configuration, a classical marker-based baseline for comparison, and
a synthetic closed-loop evaluation harness.
"""

__version__ = "0.1.0"

from . import baseline, errors, explore, harness, kinematics, maskio, mesh, optimize, render, se3

__all__ = [
    "__version__",
    "baseline",
    "errors",
    "explore",
    "harness",
    "kinematics",
    "maskio",
    "mesh",
    "optimize",
    "render",
    "se3",
]
