"""Monotone wide-stencil solvers for fully nonlinear elliptic equations in 3D."""

from ._core import (
    ConfigError,
    Error,
    default_cache_path,
    precompute_frames,
    problem_names,
    problem_summary,
    solve,
    study,
)

__all__ = [
    "ConfigError",
    "Error",
    "default_cache_path",
    "precompute_frames",
    "problem_names",
    "problem_summary",
    "solve",
    "study",
]
