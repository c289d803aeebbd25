"""Per-frame appearance resolution: expression vector -> renderable Gaussians.

Backends:
  FeatureBlend   main path: latent basis blended by e, tiny MLP -> (sh, alpha)
  ExplicitBlend  no MLP: expression-weighted average of stored color/alpha bases
  DeltaPose      MLP predicts a position shift and a rotation delta; appearance
                 is a static per-Gaussian SH + opacity logit
  ChangeAll      MLP predicts color, alpha, position shift and rotation delta
  ConditionOnly  no per-Gaussian latents: MLP consumes [e; encoded position]

Each resolve produces FrameRenderParams plus a cache consumed by the matching
backward, which chains pixel-parameter gradients into a GradientBundle (a dict
keyed like AnimGaussianCloud.named_parameters).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import mlp as mlp_mod
from .errors import ShapeError
from .model import AnimGaussianCloud
from .transforms import (
    normalize_quat,
    normalize_quat_backward,
    quat_multiply,
    quat_multiply_backward,
)

log = logging.getLogger(__name__)

IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])


@dataclass
class FrameRenderParams:
    """Effective per-frame Gaussian parameters, all float64."""

    sh: np.ndarray  # (N, (k+1)^2, 3)
    alpha: np.ndarray  # (N,) in [0, 1]
    mu_eff: np.ndarray  # (N, 3)
    rot_eff: np.ndarray  # (N, 4) unit quaternions
    log_scale: np.ndarray  # (N, 3)
    dmu: np.ndarray | None  # (N, 3) predicted shift, pose backends only
    cache: object


def blend_features(feat_basis: np.ndarray, feat_bias: np.ndarray, e: np.ndarray) -> np.ndarray:
    """Linear latent blend f = F^T e + f0, batched over Gaussians.

    feat_basis: (N, B, f_dim), feat_bias: (N, f_dim), e: (B,).
    """
    e = np.asarray(e, dtype=np.float64)
    if e.ndim != 1 or e.shape[0] != feat_basis.shape[1]:
        raise ShapeError(f"expression length {e.shape} does not match basis B={feat_basis.shape[1]}")
    return feat_basis.astype(np.float64).transpose(0, 2, 1) @ e + feat_bias.astype(np.float64)


def _check_expr(cloud: AnimGaussianCloud, e) -> np.ndarray:
    e = np.asarray(e, dtype=np.float64)
    if e.shape != (cloud.expr_dim,):
        raise ShapeError(f"expression must have length {cloud.expr_dim}, got {e.shape}")
    return e


def _mlp_inputs(cloud: AnimGaussianCloud, e: np.ndarray):
    mu64 = cloud.mu.astype(np.float64)
    pe = mlp_mod.encode_position(mu64, (cloud.scene_bounds[0], cloud.scene_bounds[1]))
    if cloud.backend_tag == "ConditionOnly":
        lead = np.broadcast_to(e, (cloud.n, cloud.expr_dim))
        f = None
    else:
        f = blend_features(cloud.feat_basis, cloud.feat_bias, e)
        lead = f
    x = np.concatenate([lead, pe], axis=1)
    return x, f, mu64


def resolve_frame(cloud: AnimGaussianCloud, e, camera=None) -> FrameRenderParams:
    """Resolve per-frame parameters for the cloud's backend."""
    e = _check_expr(cloud, e)
    tag = cloud.backend_tag
    if tag == "ExplicitBlend":
        return _resolve_explicit(cloud, e)

    x, f, mu64 = _mlp_inputs(cloud, e)
    outputs, mlp_cache = mlp_mod.mlp_forward(x, cloud.mlp)
    n = cloud.n
    log_scale = cloud.log_scale.astype(np.float64)
    rot_raw = cloud.rot.astype(np.float64)

    if tag in ("FeatureBlend", "ConditionOnly"):
        sh = outputs["color"].reshape(n, cloud.n_sh, 3)
        alpha = outputs["alpha"][:, 0]
        cache = ("mlp", e, mlp_cache, None)
        # rot passed through raw; the projection stage normalizes exactly once
        return FrameRenderParams(sh, alpha, mu64, rot_raw, log_scale, None, cache)

    # DeltaPose / ChangeAll: geometry deltas from the MLP
    dmu = outputs["dmu"]
    r_pre = IDENTITY_QUAT + outputs["rot"]  # zero head -> exact identity
    r_t = normalize_quat(r_pre)
    rot_unit = normalize_quat(rot_raw)
    mu_eff = mu64 + dmu
    rot_eff = quat_multiply(r_t, rot_unit)
    if tag == "ChangeAll":
        sh = outputs["color"].reshape(n, cloud.n_sh, 3)
        alpha = outputs["alpha"][:, 0]
    else:
        sh = cloud.sh_static.astype(np.float64)
        alpha = 1.0 / (1.0 + np.exp(-cloud.alpha_logit_static.astype(np.float64)))
    cache = ("pose", e, mlp_cache, (r_pre, r_t, rot_unit, alpha))
    return FrameRenderParams(sh, alpha, mu_eff, rot_eff, log_scale, dmu, cache)


def _explicit_weights(e: np.ndarray) -> np.ndarray:
    total = e.sum()
    if abs(total) < 1e-6 and np.max(np.abs(e)) > 0.0:
        log.warning("expression weights sum to ~0; falling back to uniform average")
        return np.full(e.shape[0], 1.0 / e.shape[0])
    return e / (total + 1e-8)


def _resolve_explicit(cloud: AnimGaussianCloud, e: np.ndarray) -> FrameRenderParams:
    w = _explicit_weights(e)
    cb = cloud.color_basis.astype(np.float64)
    ab = cloud.alpha_basis.astype(np.float64)
    sh = np.einsum("nbk,b->nk", cb, w).reshape(cloud.n, cloud.n_sh, 3)
    a_logit = ab @ w
    alpha = 1.0 / (1.0 + np.exp(-a_logit))
    cache = ("explicit", e, w, alpha)
    return FrameRenderParams(
        sh, alpha, cloud.mu.astype(np.float64), cloud.rot.astype(np.float64),
        cloud.log_scale.astype(np.float64), None, cache,
    )


def backend_backward(
    cloud: AnimGaussianCloud,
    params: FrameRenderParams,
    d_sh: np.ndarray,
    d_alpha: np.ndarray,
    d_mu_eff: np.ndarray,
    d_rot_eff: np.ndarray,
    d_log_scale: np.ndarray,
    d_dmu_extra: np.ndarray | None = None,
) -> dict:
    """Chain rasterizer gradients into a GradientBundle over stored tensors.

    d_rot_eff is taken w.r.t. the unit quaternion handed to the rasterizer;
    d_dmu_extra carries the position-shift regularizer gradient.
    """
    kind, e, sub_cache, extra = params.cache
    n = cloud.n
    bundle: dict = {}

    if kind == "explicit":
        _, _, w, alpha = params.cache
        d_flat = d_sh.reshape(n, -1)
        bundle["color_basis"] = np.einsum("nk,b->nbk", d_flat, w)
        d_logit = d_alpha * alpha * (1.0 - alpha)
        bundle["alpha_basis"] = d_logit[:, None] * w[None, :]
        bundle["mu"] = d_mu_eff
        bundle["rot"] = d_rot_eff
        bundle["log_scale"] = d_log_scale
        return bundle

    d_outputs = {}
    if kind == "mlp":
        d_outputs["color"] = d_sh.reshape(n, -1)
        d_outputs["alpha"] = d_alpha[:, None]
        d_rot_stored = d_rot_eff  # rot was passed through raw
    else:  # pose backends
        r_pre, r_t, rot_unit, alpha_static = extra
        if cloud.backend_tag == "ChangeAll":
            d_outputs["color"] = d_sh.reshape(n, -1)
            d_outputs["alpha"] = d_alpha[:, None]
        else:
            bundle["sh_static"] = d_sh
            bundle["alpha_logit_static"] = d_alpha * alpha_static * (1.0 - alpha_static)
        d_dmu = d_mu_eff.copy()
        if d_dmu_extra is not None:
            d_dmu += d_dmu_extra
        d_outputs["dmu"] = d_dmu
        d_r_t, d_rot_unit = quat_multiply_backward(r_t, rot_unit, d_rot_eff)
        d_outputs["rot"] = normalize_quat_backward(r_pre, d_r_t)
        d_rot_stored = normalize_quat_backward(cloud.rot.astype(np.float64), d_rot_unit)

    d_x, mlp_grads = mlp_mod.mlp_backward(cloud.mlp, sub_cache, d_outputs)
    for tname, g in mlp_grads.items():
        bundle[f"mlp.{tname}"] = g

    lead_dim = cloud.expr_dim if cloud.backend_tag == "ConditionOnly" else cloud.feat_dim
    d_pe = d_x[:, lead_dim:]
    d_mu_pe = mlp_mod.encode_position_backward(
        cloud.mu.astype(np.float64), (cloud.scene_bounds[0], cloud.scene_bounds[1]), d_pe
    )
    if cloud.backend_tag != "ConditionOnly":
        d_f = d_x[:, :lead_dim]
        bundle["feat_basis"] = np.einsum("b,nf->nbf", e, d_f)
        bundle["feat_bias"] = d_f

    bundle["mu"] = d_mu_eff + d_mu_pe
    bundle["rot"] = d_rot_stored
    bundle["log_scale"] = d_log_scale
    return bundle
