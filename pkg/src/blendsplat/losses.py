"""Training losses and image metrics with analytic gradients.

SSIM uses the standard 11x11 Gaussian window (sigma 1.5, C1=0.01^2,
C2=0.03^2) evaluated on the valid interior (no padding), averaged over
channels. Its gradient is derived by hand from the per-pixel statistics and
verified against finite differences in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from .errors import NotAvailable, ShapeError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2


@dataclass
class LossWeights:
    lambda_1: float = 0.8
    lambda_ssim: float = 0.2
    lambda_p: float = 0.0  # perceptual hook, ships disabled
    lambda_mu: float = 0.0  # position-shift regularizer

    def __post_init__(self):
        for name in ("lambda_1", "lambda_ssim", "lambda_p", "lambda_mu"):
            if getattr(self, name) < 0:
                raise ShapeError(f"{name} must be >= 0")


def _gauss_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    w = np.exp(-(x**2) / (2.0 * sigma**2))
    return w / w.sum()


_W1D = _gauss_window()


def _filt(img: np.ndarray) -> np.ndarray:
    """Separable valid-region Gaussian filtering of (H, W, C) maps."""
    out = correlate1d(img, _W1D, axis=0, mode="constant")
    out = correlate1d(out, _W1D, axis=1, mode="constant")
    half = SSIM_WINDOW // 2
    return out[half:-half, half:-half]


def _filt_adjoint(valid_map: np.ndarray, shape) -> np.ndarray:
    """Adjoint of _filt: embed the valid-region map and filter again."""
    full = np.zeros(shape, dtype=np.float64)
    half = SSIM_WINDOW // 2
    full[half:-half, half:-half] = valid_map
    out = correlate1d(full, _W1D, axis=0, mode="constant")
    return correlate1d(out, _W1D, axis=1, mode="constant")


def _check_pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"image shapes differ: {a.shape} vs {b.shape}")
    if a.ndim != 3 or a.shape[2] != 3:
        raise ShapeError(f"expected (H, W, 3) images, got {a.shape}")
    return a, b


def mse(a, b) -> float:
    a, b = _check_pair(a, b)
    return float(np.mean((a - b) ** 2))


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB, capped at 100 for near-zero error."""
    m = mse(a, b)
    if m < 1e-10:
        return 100.0
    return float(10.0 * np.log10(1.0 / m))


def _ssim_stats(x: np.ndarray, y: np.ndarray):
    mu_x = _filt(x)
    mu_y = _filt(y)
    sig_x = _filt(x * x) - mu_x**2
    sig_y = _filt(y * y) - mu_y**2
    sig_xy = _filt(x * y) - mu_x * mu_y
    a1 = 2.0 * mu_x * mu_y + SSIM_C1
    a2 = 2.0 * sig_xy + SSIM_C2
    b1 = mu_x**2 + mu_y**2 + SSIM_C1
    b2 = sig_x + sig_y + SSIM_C2
    return mu_x, mu_y, a1, a2, b1, b2


def ssim(a, b) -> float:
    """Mean structural similarity over the valid interior, channels averaged."""
    x, y = _check_pair(a, b)
    if x.shape[0] < SSIM_WINDOW or x.shape[1] < SSIM_WINDOW:
        raise ShapeError("images smaller than the SSIM window")
    _, _, a1, a2, b1, b2 = _ssim_stats(x, y)
    return float(np.mean(a1 * a2 / (b1 * b2)))


def ssim_with_grad(x, y):
    """(ssim value, d ssim / d x) for float64 (H, W, 3) images."""
    x, y = _check_pair(x, y)
    if x.shape[0] < SSIM_WINDOW or x.shape[1] < SSIM_WINDOW:
        raise ShapeError("images smaller than the SSIM window")
    mu_x, mu_y, a1, a2, b1, b2 = _ssim_stats(x, y)
    s_map = a1 * a2 / (b1 * b2)
    value = float(np.mean(s_map))

    m = s_map.size  # mean over channels and valid pixels
    d_mu = 2.0 * (mu_y * a2 * b1 - mu_x * a1 * a2) / (b1 * b1 * b2)
    d_sigx = -a1 * a2 / (b1 * b2 * b2)
    d_sigxy = 2.0 * a1 / (b1 * b2)

    # collapse the sigma chains that run through the mean map
    p_mu = d_mu - 2.0 * mu_x * d_sigx - mu_y * d_sigxy
    grad = (
        _filt_adjoint(p_mu, x.shape)
        + 2.0 * x * _filt_adjoint(d_sigx, x.shape)
        + y * _filt_adjoint(d_sigxy, x.shape)
    ) / m
    return value, grad


def l1_with_grad(x, y):
    x, y = _check_pair(x, y)
    diff = x - y
    value = float(np.mean(np.abs(diff)))
    grad = np.sign(diff) / diff.size
    return value, grad


def loss_total(i_r, i_gt, weights: LossWeights, dmu: np.ndarray | None = None):
    """Weighted L1 + (1 - SSIM) [+ position-shift L1] with gradients.

    Returns (loss, dL/dI_r, dL/d dmu or None).
    """
    x, y = _check_pair(i_r, i_gt)
    l1_val, l1_grad = l1_with_grad(x, y)
    ssim_val, ssim_grad = ssim_with_grad(x, y)
    loss = weights.lambda_1 * l1_val + weights.lambda_ssim * (1.0 - ssim_val)
    d_img = weights.lambda_1 * l1_grad - weights.lambda_ssim * ssim_grad
    d_dmu = None
    if dmu is not None and weights.lambda_mu > 0:
        dmu = np.asarray(dmu, dtype=np.float64)
        loss += weights.lambda_mu * float(np.mean(np.abs(dmu)))
        d_dmu = weights.lambda_mu * np.sign(dmu) / dmu.size
    if weights.lambda_p > 0:
        loss += weights.lambda_p * perceptual_loss(x, y)
    return loss, d_img, d_dmu


def perceptual_loss(i_r, i_gt) -> float:
    """Hook for a pretrained-network perceptual term; not shipped."""
    raise NotAvailable(
        "perceptual loss requires pretrained network weights that are not bundled"
    )
