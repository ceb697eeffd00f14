"""Python bindings for the gsedit C++ core.

Images are float64 numpy arrays in [C, H, W] layout. Scenes, cameras, jobs
and reports are plain dicts with the same fields as their JSON files.
"""

import json
import os

from . import _core
from ._core import (
    StageError,
    compute_psnr,
    compute_rmse,
    cross_view_consistency,
    ddim_round_trip,
    dwt2,
    enhance_depth,
    idwt2,
    wca,
)

__version__ = _core.__version__

__all__ = [
    "StageError",
    "compute_psnr",
    "compute_rmse",
    "cross_view_consistency",
    "ddim_round_trip",
    "dwt2",
    "edit_scene",
    "enhance_depth",
    "gradient_checks",
    "idwt2",
    "make_synthetic_scene",
    "render",
    "train_cimln",
    "wca",
]


def make_synthetic_scene(seed, n, layout="cluster", cameras=8, width=64, height=64):
    """Returns (scene, cameras) as dicts/lists ready for render()."""
    scene, cams = _core.make_synthetic_scene(seed, n, layout, cameras, width, height)
    return json.loads(scene), json.loads(cams)


def render(scene, camera):
    """Returns (rgb [3,H,W], depth [1,H,W], alpha [1,H,W])."""
    return _core.render(json.dumps(scene), json.dumps(camera))


def train_cimln(pairs, out, steps=200, lr=3e-4, factor=2, lam=1.0, gamma=0.1, features=16, seed=0):
    """Trains on (depth, rgb) pairs and writes a checkpoint to `out`.

    Returns (initial_loss, best_loss, loss_history).
    """
    return _core.train_cimln(pairs, os.fspath(out), steps, lr, factor, lam, gamma, features, seed)


def edit_scene(job, base_dir="."):
    """Runs the edit pipeline for a job dict and returns the metric report."""
    return json.loads(_core.edit_scene(json.dumps(job), os.fspath(base_dir)))


def gradient_checks(seed=0):
    """List of (op name, relative error) finite-difference checks."""
    return _core.gradient_checks(seed)
