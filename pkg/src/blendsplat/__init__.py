"""Expression-driven 3D Gaussian splatting on the CPU.

A scene is a cloud of anisotropic 3D gaussians whose per-gaussian latent
features are blended linearly by a low-dimensional expression vector and
decoded by a tiny MLP into spherical-harmonics color and opacity. The tiled
rasterizer and its hand-derived backward pass make the whole pipeline
trainable from images; trained models animate in real time from (expression,
camera) streams.
"""

from .backends import FrameRenderParams, blend_features, resolve_frame
from .camera import Camera, CameraPath, camera_from_spec, look_at
from .checkpoint import load_checkpoint, read_expr_ranges, save_checkpoint
from .dataset import Dataset, ExpressionFrame, load_dataset, write_dataset
from .errors import (
    BlendsplatError,
    Busy,
    DegenerateModel,
    FormatError,
    InitError,
    LoadError,
    NotAvailable,
    ShapeError,
    TrainDivergence,
    UnsupportedDegree,
)
from .losses import LossWeights, loss_total, mse, psnr, ssim
from .model import (
    BACKENDS,
    AnimGaussianCloud,
    Image,
    TrainConfig,
    init_cloud,
    scene_extent_from_cameras,
)
from .optim import Adam
from .rasterizer import (
    RenderAux,
    full_backward,
    peel_render,
    rasterize_backward,
    rasterize_forward,
    render_frame,
    render_opacity_diff,
)
from .synth import synth_scene
from .trainer import DensifyStats, densify_and_prune, train

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "AnimGaussianCloud",
    "BACKENDS",
    "BlendsplatError",
    "Busy",
    "Camera",
    "CameraPath",
    "Dataset",
    "DegenerateModel",
    "DensifyStats",
    "ExpressionFrame",
    "FormatError",
    "FrameRenderParams",
    "Image",
    "InitError",
    "LoadError",
    "LossWeights",
    "NotAvailable",
    "RenderAux",
    "ShapeError",
    "TrainConfig",
    "TrainDivergence",
    "UnsupportedDegree",
    "blend_features",
    "camera_from_spec",
    "densify_and_prune",
    "full_backward",
    "init_cloud",
    "load_checkpoint",
    "load_dataset",
    "look_at",
    "loss_total",
    "mse",
    "peel_render",
    "psnr",
    "rasterize_backward",
    "rasterize_forward",
    "read_expr_ranges",
    "render_frame",
    "render_opacity_diff",
    "resolve_frame",
    "save_checkpoint",
    "scene_extent_from_cameras",
    "ssim",
    "synth_scene",
    "train",
    "write_dataset",
]
