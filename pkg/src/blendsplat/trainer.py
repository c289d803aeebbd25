"""Training loop and adaptive density control.

One iteration renders a uniformly sampled training frame, backpropagates the
image loss, and applies a grouped Adam step. Every `densify_interval`
iterations inside the densification window the cloud is reshaped: nearly
transparent gaussians (running max rendered alpha below tau_alpha) are
pruned, and high-gradient ones are cloned (small) or split (large). Opacity
here is expression-dependent, so pruning keys off the max alpha observed
since the last densify event rather than a stored opacity.
"""

from __future__ import annotations

import json
import math
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .checkpoint import save_checkpoint
from .errors import DegenerateModel, InitError, TrainDivergence
from .losses import LossWeights, loss_total, psnr
from .model import AnimGaussianCloud, TrainConfig
from .optim import Adam
from .rasterizer import render_frame, full_backward
from .transforms import normalize_quat, quat_to_rot

SPLIT_SCALE_FACTOR = 1.6
SPLIT_CHILDREN = 2


@dataclass
class DensifyStats:
    """Per-gaussian accumulators since the last densify event."""

    grad_sum: np.ndarray  # (N,) summed screen-space gradient norms
    count: np.ndarray  # (N,) frames in which the gaussian was visible
    max_alpha: np.ndarray  # (N,) running max composited alpha

    @classmethod
    def zeros(cls, n: int) -> "DensifyStats":
        return cls(
            grad_sum=np.zeros(n, dtype=np.float64),
            count=np.zeros(n, dtype=np.int64),
            max_alpha=np.zeros(n, dtype=np.float64),
        )

    def update(self, aux):
        self.grad_sum += aux.grad_mu2d_norm
        self.count += aux.visible.astype(np.int64)
        np.maximum(self.max_alpha, aux.max_alpha, out=self.max_alpha)

    def reset(self, n: int):
        fresh = DensifyStats.zeros(n)
        self.grad_sum = fresh.grad_sum
        self.count = fresh.count
        self.max_alpha = fresh.max_alpha


def _select_cloud_rows(cloud: AnimGaussianCloud, idx: np.ndarray):
    for name in cloud.gaussian_column_names():
        setattr(cloud, name, getattr(cloud, name)[idx])


def _append_cloud_rows(cloud: AnimGaussianCloud, rows: dict):
    for name in cloud.gaussian_column_names():
        col = getattr(cloud, name)
        setattr(cloud, name, np.concatenate([col, rows[name]], axis=0))


def _sample_inside_parent(cloud, parent_idx, rng) -> np.ndarray:
    """Draw one center per (parent, child) from the parent gaussians."""
    reps = np.repeat(parent_idx, SPLIT_CHILDREN)
    q = normalize_quat(cloud.rot[reps].astype(np.float64))
    rot = quat_to_rot(q)
    scales = np.exp(cloud.log_scale[reps].astype(np.float64))
    eps = rng.standard_normal((reps.shape[0], 3))
    offsets = np.einsum("nij,nj->ni", rot, scales * eps)
    return cloud.mu[reps].astype(np.float64) + offsets


def densify_and_prune(
    cloud: AnimGaussianCloud,
    stats: DensifyStats,
    config: TrainConfig,
    opt: Adam | None = None,
    rng: np.random.Generator | None = None,
) -> dict:
    """Prune transparent gaussians, then clone/split high-gradient ones.

    Returns {"pruned", "cloned", "split"}. Optimizer moments (if an optimizer
    is given) follow the exact same row surgery, with zeros for new rows.
    Stats are reset to the new row count.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    n0 = cloud.n
    keep = stats.max_alpha >= config.tau_alpha
    if not np.any(keep):
        raise DegenerateModel("density control pruned every gaussian")
    keep_idx = np.flatnonzero(keep)
    n_pruned = n0 - keep_idx.shape[0]
    if n_pruned:
        _select_cloud_rows(cloud, keep_idx)
        if opt is not None:
            opt.select_rows(keep_idx)

    avg_grad = stats.grad_sum[keep_idx] / np.maximum(stats.count[keep_idx], 1)
    hot = avg_grad >= config.tau_pos
    max_scale = np.exp(cloud.log_scale.astype(np.float64)).max(axis=1)
    small = max_scale <= config.percent_dense * cloud.scene_extent
    clone_idx = np.flatnonzero(hot & small)
    split_idx = np.flatnonzero(hot & ~small)

    new_rows = {name: [] for name in cloud.gaussian_column_names()}
    if clone_idx.size:
        for name in new_rows:
            new_rows[name].append(getattr(cloud, name)[clone_idx].copy())
    if split_idx.size:
        child_mu = _sample_inside_parent(cloud, split_idx, rng).astype(np.float32)
        for name in new_rows:
            block = np.repeat(getattr(cloud, name)[split_idx], SPLIT_CHILDREN, axis=0)
            if name == "mu":
                block = child_mu
            elif name == "log_scale":
                block = block - np.float32(math.log(SPLIT_SCALE_FACTOR))
            new_rows[name].append(block)

    survivors = np.setdiff1d(np.arange(cloud.n), split_idx)
    n_new = clone_idx.size + SPLIT_CHILDREN * split_idx.size
    if n_new:
        appended = {
            name: np.concatenate(blocks, axis=0)
            if blocks
            else np.zeros((0,) + getattr(cloud, name).shape[1:], dtype=np.float32)
            for name, blocks in new_rows.items()
        }
        _select_cloud_rows(cloud, survivors)
        _append_cloud_rows(cloud, appended)
        if opt is not None:
            opt.select_rows(survivors)
            opt.append_rows(n_new)

    cloud.validate()
    stats.reset(cloud.n)
    return {"pruned": int(n_pruned), "cloned": int(clone_idx.size), "split": int(split_idx.size)}


def _snapshot(cloud, snapshot_dir, it) -> str:
    base = Path(snapshot_dir) if snapshot_dir else Path(tempfile.gettempdir())
    base.mkdir(parents=True, exist_ok=True)
    path = base / f"diverged_iter{it:06d}.hgas"
    save_checkpoint(cloud, path)
    return str(path)


def train(
    dataset,
    cloud: AnimGaussianCloud,
    config: TrainConfig,
    log_path=None,
    snapshot_dir=None,
    progress=None,
):
    """Optimize `cloud` against the dataset's train split.

    Returns (cloud, log) where log is a list of per-iteration records
    {iter, loss, psnr_train, N, lr_mu}; the same records stream to
    `log_path` as JSON lines when given. `progress`, if set, is called as
    progress(record) after each iteration.
    """
    frames = dataset.train
    if not frames:
        raise InitError("dataset has no training frames")
    if int(dataset.expr_dim) != cloud.expr_dim:
        raise InitError(
            f"dataset expr_dim {dataset.expr_dim} != model expr_dim {cloud.expr_dim}"
        )
    background = tuple(getattr(dataset, "background", config.background))
    weights = LossWeights(
        lambda_1=config.lambda_1,
        lambda_ssim=config.lambda_ssim,
        lambda_p=config.lambda_p,
        lambda_mu=config.lambda_mu,
    )

    rng = np.random.default_rng(config.seed)
    opt = Adam(cloud, config)
    stats = DensifyStats.zeros(cloud.n)
    log = []
    log_file = open(log_path, "a") if log_path else None
    try:
        for it in range(1, config.iters + 1):
            frame = frames[int(rng.integers(len(frames)))]
            t0 = time.perf_counter()
            img, aux, params, cache = render_frame(
                cloud, frame.expr, frame.camera, background=background
            )
            gt = frame.image.astype(np.float64)
            loss, d_img, d_dmu = loss_total(img, gt, weights, dmu=params.dmu)
            if not np.isfinite(loss):
                path = _snapshot(cloud, snapshot_dir, it)
                raise TrainDivergence(
                    f"non-finite loss at iteration {it}", snapshot_path=path
                )
            grads = full_backward(cloud, params, cache, d_img, d_dmu)
            opt.step(grads)
            stats.update(aux)

            record = {
                "iter": it,
                "loss": float(loss),
                "psnr_train": psnr(img, gt),
                "N": cloud.n,
                "lr_mu": opt.lr_of("mu"),
                "ms": (time.perf_counter() - t0) * 1e3,
            }
            log.append(record)
            if log_file:
                log_file.write(json.dumps(record) + "\n")
            if progress is not None:
                progress(record)

            in_window = config.densify_start <= it <= config.densify_stop
            if in_window and it % config.densify_interval == 0 and it < config.iters:
                densify_and_prune(cloud, stats, config, opt=opt, rng=rng)
    finally:
        if log_file:
            log_file.close()
    return cloud, log
