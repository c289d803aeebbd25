"""Shared fixtures: small seeded clouds and cameras for fast tests."""

import numpy as np
import pytest

from blendsplat.camera import look_at
from blendsplat.model import TrainConfig, init_cloud

BOUNDS = ((-0.5, -0.5, -0.5), (0.5, 0.5, 0.5))


def small_cloud(
    backend="FeatureBlend",
    n=4,
    expr_dim=3,
    sh_degree=1,
    seed=7,
    randomize=True,
    alpha_band=None,
):
    """A tiny cloud with non-trivial features, rotations, and scales.

    alpha_band=(low, high) rebuilds the alpha head so resolved opacities sit
    inside the band; keeping them under ~0.35 makes the hard 3-sigma
    footprint cutoff invisible to finite differences (edge contributions
    fall below the 1/255 compositing floor).
    """
    cfg = TrainConfig(expr_dim=expr_dim, n_init_points=n, sh_degree=sh_degree, backend=backend)
    rng = np.random.default_rng(seed)
    cloud = init_cloud(cfg, bounds=BOUNDS, rng=rng)
    if randomize:
        cloud.rot = rng.normal(0, 1, cloud.rot.shape).astype(np.float32)
        cloud.log_scale = np.log(rng.uniform(0.15, 0.35, cloud.log_scale.shape)).astype(
            np.float32
        )
        if cloud.feat_basis.size:
            cloud.feat_basis = rng.normal(0, 0.3, cloud.feat_basis.shape).astype(np.float32)
            cloud.feat_bias = rng.normal(0, 0.3, cloud.feat_bias.shape).astype(np.float32)
        if cloud.color_basis is not None:
            cloud.color_basis = rng.normal(0, 0.2, cloud.color_basis.shape).astype(np.float32)
            cloud.alpha_basis = rng.normal(0, 0.4, cloud.alpha_basis.shape).astype(np.float32)
        if cloud.sh_static is not None:
            cloud.sh_static = rng.normal(0, 0.2, cloud.sh_static.shape).astype(np.float32)
    if alpha_band is not None and cloud.mlp is not None and "alpha" in cloud.mlp.heads:
        low, high = alpha_band
        mid = 0.5 * (low + high)
        W, b = cloud.mlp.heads["alpha"]
        cloud.mlp.heads["alpha"] = (
            (W * 0.3).astype(np.float32),
            np.full_like(b, np.log(mid / (1 - mid))),
        )
    if alpha_band is not None and cloud.alpha_basis is not None:
        low, high = alpha_band
        mid = 0.5 * (low + high)
        cloud.alpha_basis = (
            0.2 * cloud.alpha_basis + np.float32(np.log(mid / (1 - mid)))
        ).astype(np.float32)
    return cloud


@pytest.fixture
def cam32():
    return look_at((0.2, 0.1, 2.2), (0, 0, 0), width=32, height=32)


@pytest.fixture
def cam24():
    return look_at((0.2, 0.1, 2.2), (0, 0, 0), width=24, height=24)
