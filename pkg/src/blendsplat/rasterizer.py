"""Tile-based differentiable splatting with an analytic backward pass.

Projection follows the local affine approximation: camera-space covariance
Sigma' = J W Sigma W^T J^T (2x2) plus a 0.3-pixel dilation. Compositing is
front-to-back with the standard clamps (alpha' capped at 0.99, contributions
below 1/255 skipped, termination when transmittance drops under 1e-4, the
crossing splat still composited).

A splat owns the pixels whose centers fall inside its radius_px circle; the
test is applied per pixel in the kernel, so tiles only schedule work and the
output is bit-identical for any tile size or thread count. Gradients are
accumulated into per-entry buffers owned by single tiles and merged serially,
which keeps training runs reproducible.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import backends as backends_mod
from ._kernels import composite_backward, composite_forward
from .backends import FrameRenderParams
from .camera import Camera
from .errors import ShapeError
from .sh import eval_sh, eval_sh_backward
from .transforms import compute_cov3d, compute_cov3d_backward

log = logging.getLogger(__name__)

TILE_SIZE = 16
DILATION = 0.3
FRUSTUM_GUARD = 1.3
RADIUS_SIGMA = 3.0


@dataclass
class RenderAux:
    """Per-frame statistics feeding density control."""

    final_T: np.ndarray  # (H, W)
    n_contrib: np.ndarray  # (H, W) composited splats per pixel
    max_alpha: np.ndarray  # (N,) max composited alpha' this frame
    grad_mu2d_norm: np.ndarray  # (N,) filled by backward, half-image units
    visible: np.ndarray  # (N,) bool, splat survived culling and binning


@dataclass
class _Projection:
    idx: np.ndarray  # indices into the full cloud for retained splats
    t: np.ndarray  # (S, 3) camera-space centers
    mu2d: np.ndarray  # (S, 2)
    depth: np.ndarray  # (S,)
    conic: np.ndarray  # (S, 3)
    radius: np.ndarray  # (S,) int64
    cov2_abc: np.ndarray  # (S, 3) dilated (A, B, C)
    M: np.ndarray  # (S, 2, 3) J @ W_rot
    cov3d: np.ndarray  # (S, 3, 3)
    cov_cache: tuple
    clamp_x: np.ndarray  # (S,) bool, guard clamp active in J
    clamp_y: np.ndarray
    ratio_sign_x: np.ndarray  # (S,) sign used when clamped
    ratio_sign_y: np.ndarray


@dataclass
class _RasterCache:
    proj: _Projection
    params: FrameRenderParams
    camera: Camera
    background: np.ndarray
    tile_size: int
    n_full: int
    rgb: np.ndarray  # (S, 3) SH-evaluated colors
    alpha: np.ndarray  # (S,)
    sh_cache: tuple
    dirs: np.ndarray  # (S, 3) unit view directions
    inv_dist: np.ndarray  # (S,)
    entry_slot: np.ndarray
    tile_offsets: np.ndarray
    n_tiles_x: int
    final_T: np.ndarray
    n_exam: np.ndarray
    aux: RenderAux
    sh_degree: int


def project_gaussians(mu: np.ndarray, rot: np.ndarray, log_scale: np.ndarray, camera: Camera) -> _Projection:
    """Project Gaussians into pixel space, culling against the frustum guard."""
    mu = np.asarray(mu, dtype=np.float64)
    w_rot = camera.rotation
    t_all = mu @ w_rot.T + camera.translation

    lim_x = FRUSTUM_GUARD * camera.tan_fovx
    lim_y = FRUSTUM_GUARD * camera.tan_fovy
    with np.errstate(divide="ignore", invalid="ignore"):
        rx = t_all[:, 0] / t_all[:, 2]
        ry = t_all[:, 1] / t_all[:, 2]
    keep = (t_all[:, 2] > camera.znear) & (np.abs(rx) <= lim_x) & (np.abs(ry) <= lim_y)
    idx = np.flatnonzero(keep)

    t = t_all[idx]
    tz = t[:, 2]
    cov3d, cov_cache = compute_cov3d(np.asarray(rot, dtype=np.float64)[idx], np.asarray(log_scale, dtype=np.float64)[idx])

    rx_c = np.clip(rx[idx], -lim_x, lim_x)
    ry_c = np.clip(ry[idx], -lim_y, lim_y)
    clamp_x = np.abs(rx[idx]) > lim_x  # inert after culling; kept for exactness at the boundary
    clamp_y = np.abs(ry[idx]) > lim_y
    tx_c = rx_c * tz
    ty_c = ry_c * tz

    s = idx.shape[0]
    J = np.zeros((s, 2, 3), dtype=np.float64)
    J[:, 0, 0] = camera.fx / tz
    J[:, 0, 2] = -camera.fx * tx_c / (tz * tz)
    J[:, 1, 1] = camera.fy / tz
    J[:, 1, 2] = -camera.fy * ty_c / (tz * tz)

    M = np.einsum("sij,jk->sik", J, w_rot)
    tmp = np.einsum("sij,sjk->sik", M, cov3d)
    cov2 = np.einsum("sik,slk->sil", tmp, M)
    A = cov2[:, 0, 0] + DILATION
    B = cov2[:, 0, 1]
    C = cov2[:, 1, 1] + DILATION
    det = A * C - B * B
    ok = det > 0
    if not np.all(ok):
        log.debug("culled %d splats with non-positive projected covariance", int((~ok).sum()))
        (idx, t, tz, cov3d, rx_c, ry_c, clamp_x, clamp_y, J, M, A, B, C, det) = (
            a[ok] for a in (idx, t, tz, cov3d, rx_c, ry_c, clamp_x, clamp_y, J, M, A, B, C, det)
        )
        cov_cache = tuple(c[ok] for c in cov_cache)

    conic = np.stack([C / det, -B / det, A / det], axis=1)
    mid = 0.5 * (A + C)
    lam_max = mid + np.sqrt(np.maximum(mid * mid - det, 0.0))
    radius = np.ceil(RADIUS_SIGMA * np.sqrt(lam_max)).astype(np.int64)

    mu2d = np.stack(
        [camera.fx * t[:, 0] / tz + camera.cx, camera.fy * t[:, 1] / tz + camera.cy], axis=1
    )

    # drop splats whose circle misses the image entirely
    on_image = (
        (mu2d[:, 0] + radius > 0.0)
        & (mu2d[:, 0] - radius < camera.width)
        & (mu2d[:, 1] + radius > 0.0)
        & (mu2d[:, 1] - radius < camera.height)
    )
    if not np.all(on_image):
        (idx, t, cov3d, rx_c, ry_c, clamp_x, clamp_y, J, M, conic, radius, mu2d, A, B, C) = (
            a[on_image]
            for a in (idx, t, cov3d, rx_c, ry_c, clamp_x, clamp_y, J, M, conic, radius, mu2d, A, B, C)
        )
        cov_cache = tuple(c[on_image] for c in cov_cache)

    return _Projection(
        idx=idx,
        t=t,
        mu2d=mu2d,
        depth=t[:, 2].copy(),
        conic=conic,
        radius=radius,
        cov2_abc=np.stack([A, B, C], axis=1),
        M=M,
        cov3d=cov3d,
        cov_cache=cov_cache,
        clamp_x=clamp_x,
        clamp_y=clamp_y,
        ratio_sign_x=np.sign(rx_c),
        ratio_sign_y=np.sign(ry_c),
    )


def build_tile_bins(mu2d, radius, depth, width, height, tile_size):
    """Depth-sorted per-tile entry lists; ties broken by splat index.

    Returns (entry_slot, tile_offsets, n_tiles_x). Rectangles of tiles cover
    each splat's circle with a one-pixel margin; the per-pixel circle test
    does the exact ownership check.
    """
    n_tiles_x = (width + tile_size - 1) // tile_size
    n_tiles_y = (height + tile_size - 1) // tile_size
    n_tiles = n_tiles_x * n_tiles_y
    s = mu2d.shape[0]
    if s == 0:
        return (
            np.zeros(0, dtype=np.int64),
            np.zeros(n_tiles + 1, dtype=np.int64),
            n_tiles_x,
        )
    r = radius.astype(np.float64) + 1.0
    tx0 = np.clip(np.floor((mu2d[:, 0] - r) / tile_size).astype(np.int64), 0, n_tiles_x - 1)
    tx1 = np.clip(np.floor((mu2d[:, 0] + r) / tile_size).astype(np.int64), 0, n_tiles_x - 1)
    ty0 = np.clip(np.floor((mu2d[:, 1] - r) / tile_size).astype(np.int64), 0, n_tiles_y - 1)
    ty1 = np.clip(np.floor((mu2d[:, 1] + r) / tile_size).astype(np.int64), 0, n_tiles_y - 1)
    w = tx1 - tx0 + 1
    h = ty1 - ty0 + 1
    counts = w * h
    total = int(counts.sum())
    slot_of_entry = np.repeat(np.arange(s, dtype=np.int64), counts)
    offsets = np.concatenate([[0], np.cumsum(counts)])
    within = np.arange(total, dtype=np.int64) - offsets[slot_of_entry]
    dxs = within % w[slot_of_entry]
    dys = within // w[slot_of_entry]
    tile_of_entry = (ty0[slot_of_entry] + dys) * n_tiles_x + (tx0[slot_of_entry] + dxs)

    order = np.lexsort((slot_of_entry, depth[slot_of_entry], tile_of_entry))
    entry_slot = slot_of_entry[order]
    sorted_tiles = tile_of_entry[order]
    tile_offsets = np.zeros(n_tiles + 1, dtype=np.int64)
    np.cumsum(np.bincount(sorted_tiles, minlength=n_tiles), out=tile_offsets[1:])
    return entry_slot, tile_offsets, n_tiles_x


def _run_forward(proj, rgb, alpha, camera, background, tile_size):
    height, width = camera.height, camera.width
    img = np.empty((height, width, 3), dtype=np.float64)
    final_T = np.empty((height, width), dtype=np.float64)
    n_exam = np.zeros((height, width), dtype=np.int64)
    n_comp = np.zeros((height, width), dtype=np.int64)
    entry_slot, tile_offsets, n_tiles_x = build_tile_bins(
        proj.mu2d, proj.radius, proj.depth, width, height, tile_size
    )
    entry_max_alpha = np.zeros(entry_slot.shape[0], dtype=np.float64)
    radius2 = (proj.radius.astype(np.float64)) ** 2
    composite_forward(
        tile_offsets, entry_slot, n_tiles_x, tile_size,
        np.ascontiguousarray(proj.mu2d), np.ascontiguousarray(proj.conic),
        np.ascontiguousarray(rgb), np.ascontiguousarray(alpha), radius2,
        np.asarray(background, dtype=np.float64), width, height,
        img, final_T, n_exam, n_comp, entry_max_alpha,
    )
    return img, final_T, n_exam, n_comp, entry_slot, tile_offsets, n_tiles_x, entry_max_alpha


def rasterize_forward(
    params: FrameRenderParams,
    camera: Camera,
    background=(1.0, 1.0, 1.0),
    tile_size: int = TILE_SIZE,
):
    """Render resolved per-frame parameters. Returns (image, aux, cache)."""
    n = params.mu_eff.shape[0]
    bg = np.asarray(background, dtype=np.float64)
    if bg.shape != (3,):
        raise ShapeError("background must be an RGB triple")

    proj = project_gaussians(params.mu_eff, params.rot_eff, params.log_scale, camera)
    idx = proj.idx

    cam_center = camera.center
    offset = params.mu_eff[idx] - cam_center
    dist = np.linalg.norm(offset, axis=1)
    inv_dist = 1.0 / np.maximum(dist, 1e-12)
    dirs = offset * inv_dist[:, None]
    degree = int(round(np.sqrt(params.sh.shape[1]))) - 1
    rgb, sh_cache = eval_sh(degree, params.sh[idx], dirs)
    alpha = params.alpha[idx]

    img, final_T, n_exam, n_comp, entry_slot, tile_offsets, n_tiles_x, entry_max_alpha = _run_forward(
        proj, rgb, alpha, camera, bg, tile_size
    )

    max_alpha = np.zeros(n, dtype=np.float64)
    if entry_slot.shape[0]:
        slot_max = np.zeros(idx.shape[0], dtype=np.float64)
        np.maximum.at(slot_max, entry_slot, entry_max_alpha)
        max_alpha[idx] = slot_max
    visible = np.zeros(n, dtype=bool)
    visible[idx] = True
    aux = RenderAux(
        final_T=final_T,
        n_contrib=n_comp,
        max_alpha=max_alpha,
        grad_mu2d_norm=np.zeros(n, dtype=np.float64),
        visible=visible,
    )
    cache = _RasterCache(
        proj=proj, params=params, camera=camera, background=bg, tile_size=tile_size,
        n_full=n, rgb=rgb, alpha=alpha, sh_cache=sh_cache, dirs=dirs, inv_dist=inv_dist,
        entry_slot=entry_slot, tile_offsets=tile_offsets, n_tiles_x=n_tiles_x,
        final_T=final_T, n_exam=n_exam, aux=aux, sh_degree=degree,
    )
    return img, aux, cache


def _conic_to_cov2(cov2_abc, d_conic):
    """Chain conic gradients back to the dilated 2x2 covariance entries."""
    A, B, C = cov2_abc[:, 0], cov2_abc[:, 1], cov2_abc[:, 2]
    det2 = (A * C - B * B) ** 2
    du, dv, dw = d_conic[:, 0], d_conic[:, 1], d_conic[:, 2]
    dA = (-C * C * du + B * C * dv - B * B * dw) / det2
    dB = (2 * B * C * du - (A * C + B * B) * dv + 2 * A * B * dw) / det2
    dC = (-B * B * du + A * B * dv - A * A * dw) / det2
    return dA, dB, dC


def rasterize_backward(cache: _RasterCache, d_img: np.ndarray) -> dict:
    """Backpropagate image gradients to per-frame parameters.

    Returns a dict of full-length gradients: sh, alpha, mu_eff, rot_eff,
    log_scale. Also fills cache.aux.grad_mu2d_norm with per-Gaussian screen
    gradient norms (components scaled by half image size, so the densify
    threshold keeps its reference meaning at any resolution).
    """
    camera = cache.camera
    d_img = np.asarray(d_img, dtype=np.float64)
    if d_img.shape != (camera.height, camera.width, 3):
        raise ShapeError(f"d_img shape {d_img.shape} does not match the rendered image")

    n = cache.n_full
    proj = cache.proj
    idx = proj.idx
    s = idx.shape[0]
    k_sh = cache.params.sh.shape[1]
    out = {
        "sh": np.zeros((n, k_sh, 3), dtype=np.float64),
        "alpha": np.zeros(n, dtype=np.float64),
        "mu_eff": np.zeros((n, 3), dtype=np.float64),
        "rot_eff": np.zeros((n, 4), dtype=np.float64),
        "log_scale": np.zeros((n, 3), dtype=np.float64),
    }
    m = cache.entry_slot.shape[0]
    if s == 0 or m == 0:
        return out

    d_rgb_e = np.zeros((m, 3), dtype=np.float64)
    d_alpha_e = np.zeros(m, dtype=np.float64)
    d_mu2d_e = np.zeros((m, 2), dtype=np.float64)
    d_conic_e = np.zeros((m, 3), dtype=np.float64)
    radius2 = (proj.radius.astype(np.float64)) ** 2
    composite_backward(
        cache.tile_offsets, cache.entry_slot, cache.n_tiles_x, cache.tile_size,
        np.ascontiguousarray(proj.mu2d), np.ascontiguousarray(proj.conic),
        np.ascontiguousarray(cache.rgb), np.ascontiguousarray(cache.alpha), radius2,
        cache.background, camera.width, camera.height,
        np.ascontiguousarray(d_img), cache.final_T, cache.n_exam,
        d_rgb_e, d_alpha_e, d_mu2d_e, d_conic_e,
    )

    d_rgb = np.zeros((s, 3), dtype=np.float64)
    d_alpha = np.zeros(s, dtype=np.float64)
    d_mu2d = np.zeros((s, 2), dtype=np.float64)
    d_conic = np.zeros((s, 3), dtype=np.float64)
    np.add.at(d_rgb, cache.entry_slot, d_rgb_e)
    np.add.at(d_alpha, cache.entry_slot, d_alpha_e)
    np.add.at(d_mu2d, cache.entry_slot, d_mu2d_e)
    np.add.at(d_conic, cache.entry_slot, d_conic_e)

    # color path: SH coefficients and view direction
    d_coeffs, d_dirs = eval_sh_backward(
        cache.sh_degree, cache.params.sh[idx], cache.dirs, cache.sh_cache, d_rgb
    )
    radial = np.sum(cache.dirs * d_dirs, axis=1, keepdims=True)
    d_mu_dir = (d_dirs - cache.dirs * radial) * cache.inv_dist[:, None]

    # conic -> dilated 2x2 covariance -> M and 3D covariance
    dA, dB, dC = _conic_to_cov2(proj.cov2_abc, d_conic)
    G = np.empty((s, 2, 2), dtype=np.float64)
    G[:, 0, 0] = dA
    G[:, 0, 1] = dB
    G[:, 1, 0] = 0.0
    G[:, 1, 1] = dC
    MS = np.einsum("sij,sjk->sik", proj.M, proj.cov3d)
    d_M = np.einsum("sab,sbl->sal", G + np.swapaxes(G, 1, 2), MS)
    d_cov3d = np.einsum("saj,sab,sbk->sjk", proj.M, G, proj.M)
    d_rot_s, d_log_scale_s = compute_cov3d_backward(
        np.asarray(cache.params.rot_eff, dtype=np.float64)[idx], proj.cov_cache, d_cov3d
    )

    # J entries from d_M = dL/d(J W): dJ = d_M W^T
    d_J = np.einsum("sal,kl->sak", d_M, camera.rotation)
    t = proj.t
    tz = t[:, 2]
    fx, fy = camera.fx, camera.fy
    lim_x = FRUSTUM_GUARD * camera.tan_fovx
    lim_y = FRUSTUM_GUARD * camera.tan_fovy

    d_t = np.zeros_like(t)
    d_t[:, 2] += d_J[:, 0, 0] * (-fx / tz**2) + d_J[:, 1, 1] * (-fy / tz**2)
    # J02 = -fx * tx_c / tz^2 with tx_c = tx (unclamped) or sign*lim*tz (clamped)
    unc_x = ~proj.clamp_x
    d_t[unc_x, 0] += d_J[unc_x, 0, 2] * (-fx / tz[unc_x] ** 2)
    d_t[unc_x, 2] += d_J[unc_x, 0, 2] * (2.0 * fx * t[unc_x, 0] / tz[unc_x] ** 3)
    cl_x = proj.clamp_x
    d_t[cl_x, 2] += d_J[cl_x, 0, 2] * (fx * proj.ratio_sign_x[cl_x] * lim_x / tz[cl_x] ** 2)
    unc_y = ~proj.clamp_y
    d_t[unc_y, 1] += d_J[unc_y, 1, 2] * (-fy / tz[unc_y] ** 2)
    d_t[unc_y, 2] += d_J[unc_y, 1, 2] * (2.0 * fy * t[unc_y, 1] / tz[unc_y] ** 3)
    cl_y = proj.clamp_y
    d_t[cl_y, 2] += d_J[cl_y, 1, 2] * (fy * proj.ratio_sign_y[cl_y] * lim_y / tz[cl_y] ** 2)

    # pixel projection mu2d = (fx tx / tz + cx, fy ty / tz + cy), unclamped t
    d_t[:, 0] += d_mu2d[:, 0] * fx / tz
    d_t[:, 1] += d_mu2d[:, 1] * fy / tz
    d_t[:, 2] += d_mu2d[:, 0] * (-fx * t[:, 0] / tz**2) + d_mu2d[:, 1] * (-fy * t[:, 1] / tz**2)

    d_mu_s = d_t @ camera.rotation + d_mu_dir

    out["sh"][idx] = d_coeffs
    out["alpha"][idx] = d_alpha
    out["mu_eff"][idx] = d_mu_s
    out["rot_eff"][idx] = d_rot_s
    out["log_scale"][idx] = d_log_scale_s

    scaled = d_mu2d * np.array([camera.width * 0.5, camera.height * 0.5])
    cache.aux.grad_mu2d_norm[idx] = np.linalg.norm(scaled, axis=1)
    return out


def full_backward(cloud, params: FrameRenderParams, cache, d_img, d_dmu_extra=None) -> dict:
    """Convenience chain: rasterizer backward then backend backward."""
    raster = rasterize_backward(cache, d_img)
    return backends_mod.backend_backward(
        cloud, params,
        raster["sh"], raster["alpha"], raster["mu_eff"], raster["rot_eff"], raster["log_scale"],
        d_dmu_extra=d_dmu_extra,
    )


def render_frame(cloud, e, camera: Camera, background=None, tile_size: int = TILE_SIZE):
    """Resolve and rasterize in one call. Returns (image, aux, params, cache)."""
    params = backends_mod.resolve_frame(cloud, e, camera)
    bg = (1.0, 1.0, 1.0) if background is None else background
    img, aux, cache = rasterize_forward(params, camera, bg, tile_size)
    return img, aux, params, cache


def peel_render(
    params: FrameRenderParams,
    camera: Camera,
    fraction: float,
    background=(1.0, 1.0, 1.0),
    tile_size: int = TILE_SIZE,
):
    """Drop the nearest floor(fraction*N) Gaussians by camera depth, render the rest."""
    if not 0.0 <= fraction <= 1.0:
        raise ShapeError("fraction must be in [0, 1]")
    n = params.mu_eff.shape[0]
    n_drop = int(np.floor(fraction * n))
    t = params.mu_eff @ camera.rotation.T + camera.translation
    order = np.argsort(t[:, 2], kind="stable")
    keep = np.sort(order[n_drop:])
    sub = FrameRenderParams(
        sh=params.sh[keep], alpha=params.alpha[keep], mu_eff=params.mu_eff[keep],
        rot_eff=params.rot_eff[keep], log_scale=params.log_scale[keep], dmu=None, cache=None,
    )
    img, _, _ = rasterize_forward(sub, camera, background, tile_size)
    return img


def render_opacity_diff(cloud, e_i, e_j, camera: Camera, weight_expr=None, tile_size: int = TILE_SIZE):
    """Composite per-Gaussian opacity differences alpha_j - alpha_i.

    Geometry and compositing weights come from the frame of `weight_expr`
    (default e_j). Returns (mapped image, raw signed field): negative values
    shade blue, positive red, zero white.
    """
    p_i = backends_mod.resolve_frame(cloud, e_i, camera)
    p_j = backends_mod.resolve_frame(cloud, e_j, camera)
    p_w = p_j if weight_expr is None else backends_mod.resolve_frame(cloud, weight_expr, camera)

    diff = p_j.alpha - p_i.alpha
    proj = project_gaussians(p_w.mu_eff, p_w.rot_eff, p_w.log_scale, camera)
    rgb = np.repeat(diff[proj.idx][:, None], 3, axis=1)
    field_img, *_ = _run_forward(
        proj, rgb, p_w.alpha[proj.idx], camera, np.zeros(3), tile_size
    )
    field = field_img[:, :, 0]

    scale = max(float(np.abs(field).max()), 1e-12)
    pos = np.clip(field, 0.0, None) / scale
    neg = np.clip(-field, 0.0, None) / scale
    mapped = np.stack([1.0 - neg, 1.0 - pos - neg, 1.0 - pos], axis=2)
    return mapped, field
