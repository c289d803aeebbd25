"""Synthetic teacher scenes for end-to-end reconstruction tests.

A seeded random teacher cloud (nonzero feature bases, expression-sensitive
opacity) renders ground-truth frames through the reference renderer along a
camera arc and a smooth low-dimensional expression trajectory. A fresh
student model trained on the output should recover the teacher's appearance;
held-out frames probe unseen expression/camera combinations.
"""

from __future__ import annotations

import numpy as np

from .backends import resolve_frame
from .camera import look_at
from .dataset import Dataset, ExpressionFrame, load_dataset, write_dataset
from .errors import InitError
from .model import AnimGaussianCloud, TrainConfig, init_cloud
from .oracle import oracle_render

BALL_RADIUS = 1.0
CAM_RADIUS = 3.2
ALPHA_VARIATION_TARGET = 0.3  # per-gaussian alpha swing across expressions
ALPHA_VARIATION_FRACTION = 0.2  # fraction of gaussians that must swing


def expression_trajectory(rng: np.random.Generator, b_dim: int, n_frames: int) -> np.ndarray:
    """Smooth per-component sinusoids in [0, 1], shaped (n_frames, B)."""
    t = np.linspace(0.0, 1.0, n_frames, endpoint=False)
    amp = rng.uniform(0.25, 0.45, size=b_dim)
    freq = rng.integers(1, 4, size=b_dim).astype(np.float64)
    phase = rng.uniform(0.0, 2.0 * np.pi, size=b_dim)
    e = 0.5 + amp[None, :] * np.sin(2.0 * np.pi * freq[None, :] * t[:, None] + phase[None, :])
    return np.clip(e, 0.0, 1.0)


def arc_cameras(n_frames: int, resolution: int):
    """Cameras sweeping a viewing arc in front of the scene."""
    t = np.linspace(0.0, 1.0, n_frames, endpoint=False)
    azimuth = 0.7 * np.sin(2.0 * np.pi * 0.9 * t + 0.3)
    height = 0.25 * np.sin(2.0 * np.pi * 0.5 * t + 1.1)
    cams = []
    for az, h in zip(azimuth, height):
        eye = np.array([CAM_RADIUS * np.sin(az), h, CAM_RADIUS * np.cos(az)])
        cams.append(look_at(eye, np.zeros(3), fov_deg=40.0, width=resolution, height=resolution))
    return cams


def alpha_variation(cloud: AnimGaussianCloud, exprs: np.ndarray) -> np.ndarray:
    """Per-gaussian max-minus-min resolved alpha across the given expressions."""
    alphas = np.stack([resolve_frame(cloud, e).alpha for e in exprs])
    return alphas.max(axis=0) - alphas.min(axis=0)


def _build_teacher(rng: np.random.Generator, b_dim, n_gaussians, exprs) -> AnimGaussianCloud:
    # uniform-in-ball centers, then a plain FeatureBlend init for the shapes
    d = rng.standard_normal((n_gaussians, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    radii = BALL_RADIUS * rng.uniform(0.0, 1.0, n_gaussians) ** (1.0 / 3.0)
    points = (d * radii[:, None]).astype(np.float64)

    config = TrainConfig(expr_dim=b_dim, n_init_points=n_gaussians, seed=int(rng.integers(2**31)))
    cloud = init_cloud(config, points=points, rng=rng)

    cloud.log_scale = np.log(rng.uniform(0.04, 0.12, size=(n_gaussians, 3))).astype(np.float32)
    cloud.feat_bias = rng.normal(0.0, 0.5, size=cloud.feat_bias.shape).astype(np.float32)
    cloud.feat_basis = rng.normal(0.0, 0.3, size=cloud.feat_basis.shape).astype(np.float32)
    cloud.scene_extent = float(CAM_RADIUS)

    # redraw the heads from this rng so the teacher does not depend on the
    # draw order inside init_cloud
    for name in ("color", "alpha"):
        W, b = cloud.mlp.heads[name]
        fan_in = W.shape[0]
        lim = 1.0 / np.sqrt(fan_in)
        cloud.mlp.heads[name] = (
            rng.uniform(-lim, lim, size=W.shape).astype(np.float32),
            rng.uniform(-lim, lim, size=b.shape).astype(np.float32),
        )

    # calibrate color spread: unit-ish variance on the DC coefficients
    params = resolve_frame(cloud, exprs[0])
    dc = params.sh[:, 0, :]
    spread = float(dc.std())
    if spread > 1e-8:
        W, b = cloud.mlp.heads["color"]
        s = np.float32(0.35 / spread)
        cloud.mlp.heads["color"] = (W * s, b * s)

    # amplify expression sensitivity until enough gaussians swing their alpha
    for _ in range(12):
        var = alpha_variation(cloud, exprs)
        if np.mean(var > ALPHA_VARIATION_TARGET) >= ALPHA_VARIATION_FRACTION:
            break
        W, b = cloud.mlp.heads["alpha"]
        cloud.mlp.heads["alpha"] = (W * np.float32(1.4), b)
        cloud.feat_basis = cloud.feat_basis * np.float32(1.15)
    return cloud


def synth_scene(
    seed: int,
    b_dim: int = 8,
    n_gaussians: int = 500,
    n_frames: int = 100,
    resolution: int = 128,
    out_dir=None,
    background=(1.0, 1.0, 1.0),
):
    """Generate a teacher cloud and its reference-rendered dataset.

    Returns (teacher_cloud, dataset). When out_dir is given the dataset is
    written to disk (8-bit PNG frames + manifest) and reloaded from it, so
    the returned tensors match the stored files exactly. Every fifth frame
    goes to the test split.
    """
    if b_dim < 2:
        raise InitError("synthetic scenes need expr_dim >= 2")
    if n_gaussians < 10:
        raise InitError("synthetic scenes need at least 10 gaussians")
    rng = np.random.default_rng(seed)
    exprs = expression_trajectory(rng, b_dim, n_frames)
    cameras = arc_cameras(n_frames, resolution)
    teacher = _build_teacher(rng, b_dim, n_gaussians, exprs)

    frames = []
    for i in range(n_frames):
        params = resolve_frame(teacher, exprs[i])
        img = oracle_render(params, cameras[i], background)
        img = np.round(np.clip(img, 0.0, 1.0) * 255.0) / 255.0  # match PNG storage
        frames.append(
            ExpressionFrame(
                image=img.astype(np.float32), expr=exprs[i], camera=cameras[i], index=i
            )
        )

    idx = np.arange(n_frames)
    test_idx = idx[idx % 5 == 4]
    train_idx = idx[idx % 5 != 4]
    pad = 1.1 * BALL_RADIUS
    init_bounds = np.array([[-pad, -pad, -pad], [pad, pad, pad]])

    if out_dir is not None:
        write_dataset(
            out_dir, frames, expr_dim=b_dim, background=background,
            train_idx=train_idx.tolist(), test_idx=test_idx.tolist(),
            init_bounds=init_bounds,
        )
        return teacher, load_dataset(out_dir)
    return teacher, Dataset(
        train=[frames[j] for j in train_idx],
        test=[frames[j] for j in test_idx],
        expr_dim=b_dim,
        background=tuple(background),
        init_bounds=init_bounds,
    )
