"""Bundled fixture data: a generic 6-link elbow arm with box link meshes."""

import os

_HERE = os.path.dirname(os.path.abspath(__file__))


def fixture_robot_path() -> str:
    """Path to the bundled 6-link robot model JSON."""
    return os.path.join(_HERE, "arm6.json")
