"""Animatable Gaussian cloud: parameter storage, config, and initialization.

Parameters live in float32 columnar arrays co-indexed by Gaussian; all math
upcasts to float64 at the point of use. Scales are stored in log domain and
rotations as quaternions that are renormalized after every optimizer step.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np
from scipy.spatial import cKDTree

from . import mlp as mlp_mod
from .errors import InitError, ShapeError
from .sh import num_sh_coeffs

BACKENDS = ("FeatureBlend", "ExplicitBlend", "DeltaPose", "ChangeAll", "ConditionOnly")

# backends whose per-gaussian latents feed the shared MLP
FEATURE_BACKENDS = ("FeatureBlend", "DeltaPose", "ChangeAll")


@dataclass
class TrainConfig:
    """Training and model hyperparameters.

    The iteration count defaults to the desk-scale schedule; full-scale runs
    use 50000 with the same relative decay.
    """

    lr_mlp: float = 1.6e-4
    lr_mu: float = 1.6e-4
    lr_feat: float = 0.0025
    lr_scale: float = 0.005
    lr_rot: float = 0.001
    lr_static_alpha: float = 0.05  # DeltaPose static opacity logits only
    lambda_1: float = 0.8
    lambda_ssim: float = 0.2
    lambda_p: float = 0.0  # perceptual hook, ships disabled
    lambda_mu: float = 0.01  # position-shift regularizer (DeltaPose/ChangeAll)
    perceptual_start_iter: int = 10000
    densify_start: int = 500
    densify_stop: int = 15000
    densify_interval: int = 100
    tau_alpha: float = 0.005
    tau_pos: float = 2e-4
    percent_dense: float = 0.01
    iters: int = 5000
    seed: int = 0
    background: tuple = (1.0, 1.0, 1.0)
    expr_dim: int = 52
    feat_dim: int = 32
    sh_degree: int = 3
    hidden_width: int = 64
    n_init_points: int = 2500
    backend: str = "FeatureBlend"

    def __post_init__(self):
        for lr_name in ("lr_mlp", "lr_mu", "lr_feat", "lr_scale", "lr_rot", "lr_static_alpha"):
            if getattr(self, lr_name) <= 0:
                raise InitError(f"{lr_name} must be > 0")
        for lam in ("lambda_1", "lambda_ssim", "lambda_p", "lambda_mu"):
            if getattr(self, lam) < 0:
                raise InitError(f"{lam} must be >= 0")
        if not self.densify_start < self.densify_stop:
            raise InitError("densify_start must be < densify_stop")
        if self.backend not in BACKENDS:
            raise InitError(f"unknown backend {self.backend!r}")
        num_sh_coeffs(self.sh_degree)  # raises UnsupportedDegree

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise InitError(f"unknown config keys: {sorted(unknown)}")
        if "background" in d:
            d = dict(d, background=tuple(d["background"]))
        return cls(**d)


@dataclass
class Image:
    """Row-major RGB float32 image with components in [0, 1]."""

    width: int
    height: int
    pixels: np.ndarray  # (height, width, 3) float32

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float32)
        if px.shape != (self.height, self.width, 3):
            raise ShapeError(f"pixels must be ({self.height}, {self.width}, 3), got {px.shape}")
        if not np.all(np.isfinite(px)):
            raise ShapeError("image contains non-finite values")
        self.pixels = px

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "Image":
        arr = np.asarray(arr)
        return cls(width=arr.shape[1], height=arr.shape[0], pixels=arr.astype(np.float32))


@dataclass
class AnimGaussianCloud:
    """Columnar Gaussian storage plus the shared MLP and backend extras."""

    mu: np.ndarray  # (N, 3) float32
    rot: np.ndarray  # (N, 4) float32, (w, x, y, z)
    log_scale: np.ndarray  # (N, 3) float32
    feat_basis: np.ndarray  # (N, B, f_dim) float32; (N, 0, 0) when unused
    feat_bias: np.ndarray  # (N, f_dim) float32; (N, 0) when unused
    mlp: mlp_mod.TinyMLPWeights | None
    expr_dim: int
    feat_dim: int
    sh_degree: int
    scene_extent: float
    scene_bounds: np.ndarray  # (2, 3) float32 AABB used by the positional encoding
    backend_tag: str
    # ExplicitBlend storage: per-gaussian bases blended directly by e
    color_basis: np.ndarray | None = None  # (N, B, 3*(k+1)^2) float32
    alpha_basis: np.ndarray | None = None  # (N, B) float32, logit domain
    # DeltaPose static appearance
    sh_static: np.ndarray | None = None  # (N, (k+1)^2, 3) float32
    alpha_logit_static: np.ndarray | None = None  # (N,) float32

    @property
    def n(self) -> int:
        return self.mu.shape[0]

    @property
    def n_sh(self) -> int:
        return num_sh_coeffs(self.sh_degree)

    def validate(self):
        n = self.n
        if n < 1:
            raise ShapeError("cloud must hold at least one gaussian")
        for name in self.gaussian_column_names():
            col = getattr(self, name)
            if col.shape[0] != n:
                raise ShapeError(f"column {name} has length {col.shape[0]}, expected {n}")
            if not np.all(np.isfinite(col)):
                raise ShapeError(f"column {name} contains non-finite values")
        if self.backend_tag not in BACKENDS:
            raise ShapeError(f"unknown backend tag {self.backend_tag!r}")
        if self.backend_tag in FEATURE_BACKENDS:
            if self.feat_basis.shape[1:] != (self.expr_dim, self.feat_dim):
                raise ShapeError("feat_basis must be (N, B, f_dim)")
            if self.mlp.in_dim != self.feat_dim + mlp_mod.pe_width():
                raise ShapeError("mlp input width must be f_dim + pe width")
        if self.backend_tag == "ConditionOnly":
            if self.mlp.in_dim != self.expr_dim + mlp_mod.pe_width():
                raise ShapeError("mlp input width must be B + pe width")
        norms = np.linalg.norm(self.rot.astype(np.float64), axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-4):
            raise ShapeError("stored quaternions drifted from unit norm")

    def gaussian_column_names(self):
        """Names of per-gaussian float32 columns, in storage order."""
        names = ["mu", "rot", "log_scale", "feat_basis", "feat_bias"]
        if self.color_basis is not None:
            names += ["color_basis", "alpha_basis"]
        if self.sh_static is not None:
            names += ["sh_static", "alpha_logit_static"]
        return names

    def named_parameters(self):
        """(name, array, lr group) for every trainable tensor."""
        groups = {
            "mu": "mu",
            "rot": "rot",
            "log_scale": "scale",
            "feat_basis": "feat",
            "feat_bias": "feat",
            "color_basis": "feat",
            "alpha_basis": "feat",
            "sh_static": "feat",
            "alpha_logit_static": "static_alpha",
        }
        for name in self.gaussian_column_names():
            col = getattr(self, name)
            if col.size or name in ("mu", "rot", "log_scale"):
                yield name, col, groups[name]
        if self.mlp is not None:
            for tname, arr in self.mlp.named_tensors():
                yield f"mlp.{tname}", arr, "mlp"

    def set_param(self, name: str, value: np.ndarray):
        if name.startswith("mlp."):
            self.mlp.set_tensor(name[4:], value)
        else:
            setattr(self, name, value)

    def copy(self) -> "AnimGaussianCloud":
        def c(a):
            return None if a is None else a.copy()

        return AnimGaussianCloud(
            mu=self.mu.copy(),
            rot=self.rot.copy(),
            log_scale=self.log_scale.copy(),
            feat_basis=self.feat_basis.copy(),
            feat_bias=self.feat_bias.copy(),
            mlp=None if self.mlp is None else self.mlp.copy(),
            expr_dim=self.expr_dim,
            feat_dim=self.feat_dim,
            sh_degree=self.sh_degree,
            scene_extent=self.scene_extent,
            scene_bounds=self.scene_bounds.copy(),
            backend_tag=self.backend_tag,
            color_basis=c(self.color_basis),
            alpha_basis=c(self.alpha_basis),
            sh_static=c(self.sh_static),
            alpha_logit_static=c(self.alpha_logit_static),
        )


def mean_knn_distance(points: np.ndarray, k: int = 3) -> np.ndarray:
    """Mean distance from each point to its k nearest neighbors (excluding self)."""
    n = points.shape[0]
    if n == 1:
        return np.full(1, 0.1)
    k_eff = min(k, n - 1)
    tree = cKDTree(points)
    dists, _ = tree.query(points, k=k_eff + 1)  # first hit is the point itself
    return dists[:, 1:].mean(axis=1)


def init_cloud(
    config: TrainConfig,
    points: np.ndarray | None = None,
    bounds=None,
    rng: np.random.Generator | None = None,
) -> AnimGaussianCloud:
    """Create a fresh cloud from seed points or by sampling a bounding box.

    Centers come from `points` when given, otherwise config.n_init_points
    uniform samples inside `bounds`. Feature bases start at zero, biases at
    N(0, 0.01^2), rotations at identity, and isotropic log scales at the log
    of the mean distance to the 3 nearest seed points.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    if points is None:
        if bounds is None:
            raise InitError("need seed points or a bounding box to sample within")
        lo, hi = (np.asarray(b, dtype=np.float64) for b in bounds)
        if lo.shape != (3,) or hi.shape != (3,) or np.any(hi <= lo):
            raise InitError("bounds must be a non-degenerate (lo, hi) box")
        points = rng.uniform(lo, hi, size=(config.n_init_points, 3))
    else:
        points = np.asarray(points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] != 3 or points.shape[0] < 1:
            raise InitError("points must be a non-empty (N, 3) array")
    n = points.shape[0]
    b_dim, f_dim, k = config.expr_dim, config.feat_dim, config.sh_degree
    n_sh = num_sh_coeffs(k)

    if bounds is not None:
        lo, hi = (np.asarray(b, dtype=np.float64) for b in bounds)
    else:
        lo, hi = points.min(axis=0), points.max(axis=0)
        pad = 0.1 * np.maximum(hi - lo, 1e-3)
        lo, hi = lo - pad, hi + pad

    dist = np.maximum(mean_knn_distance(points), 1e-6)
    log_scale = np.log(dist)[:, None].repeat(3, axis=1)

    rot = np.zeros((n, 4), dtype=np.float32)
    rot[:, 0] = 1.0

    backend = config.backend
    uses_features = backend in FEATURE_BACKENDS
    if uses_features:
        feat_basis = np.zeros((n, b_dim, f_dim), dtype=np.float32)
        feat_bias = rng.normal(0.0, 0.01, size=(n, f_dim)).astype(np.float32)
    else:
        feat_basis = np.zeros((n, 0, 0), dtype=np.float32)
        feat_bias = np.zeros((n, 0), dtype=np.float32)

    net = None
    color_basis = alpha_basis = sh_static = alpha_logit_static = None
    if backend == "FeatureBlend":
        net = mlp_mod.mlp_init(
            rng, f_dim + mlp_mod.pe_width(), {"color": 3 * n_sh, "alpha": 1},
            hidden_width=config.hidden_width,
        )
    elif backend == "ChangeAll":
        net = mlp_mod.mlp_init(
            rng, f_dim + mlp_mod.pe_width(),
            {"color": 3 * n_sh, "alpha": 1, "dmu": 3, "rot": 4},
            hidden_width=config.hidden_width, zero_heads=("dmu", "rot"),
        )
    elif backend == "DeltaPose":
        net = mlp_mod.mlp_init(
            rng, f_dim + mlp_mod.pe_width(), {"dmu": 3, "rot": 4},
            hidden_width=config.hidden_width, zero_heads=("dmu", "rot"),
        )
        sh_static = np.zeros((n, n_sh, 3), dtype=np.float32)
        alpha_logit_static = np.full(n, np.log(0.1 / 0.9), dtype=np.float32)
    elif backend == "ConditionOnly":
        net = mlp_mod.mlp_init(
            rng, b_dim + mlp_mod.pe_width(), {"color": 3 * n_sh, "alpha": 1},
            n_hidden_layers=4, hidden_width=config.hidden_width,
        )
    elif backend == "ExplicitBlend":
        color_basis = np.zeros((n, b_dim, 3 * n_sh), dtype=np.float32)
        alpha_basis = np.zeros((n, b_dim), dtype=np.float32)

    cloud = AnimGaussianCloud(
        mu=points.astype(np.float32),
        rot=rot,
        log_scale=log_scale.astype(np.float32),
        feat_basis=feat_basis,
        feat_bias=feat_bias,
        mlp=net,
        expr_dim=b_dim,
        feat_dim=f_dim if uses_features else 0,
        sh_degree=k,
        scene_extent=1.0,
        scene_bounds=np.stack([lo, hi]).astype(np.float32),
        backend_tag=backend,
        color_basis=color_basis,
        alpha_basis=alpha_basis,
        sh_static=sh_static,
        alpha_logit_static=alpha_logit_static,
    )
    cloud.validate()
    return cloud


def scene_extent_from_cameras(cameras) -> float:
    """Radius of the bounding sphere of the training-camera centers."""
    centers = np.stack([c.center for c in cameras])
    mid = centers.mean(axis=0)
    radius = float(np.max(np.linalg.norm(centers - mid, axis=1)))
    return max(radius, 1e-3)
