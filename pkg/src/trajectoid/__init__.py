"""Convex shells around a heavy ball, shaped to roll along a prescribed periodic path."""

from .mesh_forge import CutPlane, TrajectoidSolid, build_shell, carve, core_cavity, export_stl, support_height
from .path_model import PlanarPath, load_path_csv, turning_profile
from .rolling_map import Rotation, SphereTrace, holonomy, rotation_angle, sphere_trace
from .roll_verify import VerificationReport, replay, verify_holonomy, verify_trace_support
from .solver import Solution, minimal_n, rodrigues_angle, scan, search_beta, solve_n

__all__ = [
    "CutPlane",
    "PlanarPath",
    "Rotation",
    "Solution",
    "SphereTrace",
    "TrajectoidSolid",
    "VerificationReport",
    "build_shell",
    "carve",
    "core_cavity",
    "export_stl",
    "holonomy",
    "load_path_csv",
    "minimal_n",
    "replay",
    "rodrigues_angle",
    "rotation_angle",
    "scan",
    "search_beta",
    "solve_n",
    "sphere_trace",
    "support_height",
    "turning_profile",
    "verify_holonomy",
    "verify_trace_support",
]
