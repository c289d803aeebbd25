"""Real spherical harmonics color evaluation up to degree 3.

Coefficient layout follows the splatting convention: index 0 is the DC term,
1..3 degree one, 4..8 degree two, 9..15 degree three. Colors are evaluated as
sum(coeff * basis) + 0.5 and clamped at zero from below.
"""

from __future__ import annotations

import numpy as np

from .errors import UnsupportedDegree

SH_C0 = 0.28209479177387814
SH_C1 = 0.4886025119029199
SH_C2 = (
    1.0925484305920792,
    -1.0925484305920792,
    0.31539156525252005,
    -1.0925484305920792,
    0.5462742152960396,
)
SH_C3 = (
    -0.5900435899266435,
    2.890611442640554,
    -0.4570457994644658,
    0.3731763325901154,
    -0.4570457994644658,
    1.445305721320277,
    -0.5900435899266435,
)

_NUM_COEFFS = {0: 1, 1: 4, 2: 9, 3: 16}


def num_sh_coeffs(degree: int) -> int:
    if degree not in _NUM_COEFFS:
        raise UnsupportedDegree(f"sh degree must be 0..3, got {degree}")
    return _NUM_COEFFS[degree]


def sh_basis(degree: int, dirs: np.ndarray) -> np.ndarray:
    """Basis values for unit directions. dirs (N, 3) -> (N, num_coeffs)."""
    n = num_sh_coeffs(degree)
    dirs = np.asarray(dirs, dtype=np.float64)
    out = np.empty((dirs.shape[0], n), dtype=np.float64)
    out[:, 0] = SH_C0
    if degree < 1:
        return out
    x, y, z = dirs[:, 0], dirs[:, 1], dirs[:, 2]
    out[:, 1] = -SH_C1 * y
    out[:, 2] = SH_C1 * z
    out[:, 3] = -SH_C1 * x
    if degree < 2:
        return out
    xx, yy, zz = x * x, y * y, z * z
    xy, yz, xz = x * y, y * z, x * z
    out[:, 4] = SH_C2[0] * xy
    out[:, 5] = SH_C2[1] * yz
    out[:, 6] = SH_C2[2] * (2.0 * zz - xx - yy)
    out[:, 7] = SH_C2[3] * xz
    out[:, 8] = SH_C2[4] * (xx - yy)
    if degree < 3:
        return out
    out[:, 9] = SH_C3[0] * y * (3.0 * xx - yy)
    out[:, 10] = SH_C3[1] * xy * z
    out[:, 11] = SH_C3[2] * y * (4.0 * zz - xx - yy)
    out[:, 12] = SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy)
    out[:, 13] = SH_C3[4] * x * (4.0 * zz - xx - yy)
    out[:, 14] = SH_C3[5] * z * (xx - yy)
    out[:, 15] = SH_C3[6] * x * (xx - 3.0 * yy)
    return out


def sh_basis_grad(degree: int, dirs: np.ndarray) -> np.ndarray:
    """d basis / d dir for unit directions: (N, num_coeffs, 3)."""
    n = num_sh_coeffs(degree)
    dirs = np.asarray(dirs, dtype=np.float64)
    N = dirs.shape[0]
    g = np.zeros((N, n, 3), dtype=np.float64)
    if degree < 1:
        return g
    x, y, z = dirs[:, 0], dirs[:, 1], dirs[:, 2]
    g[:, 1, 1] = -SH_C1
    g[:, 2, 2] = SH_C1
    g[:, 3, 0] = -SH_C1
    if degree < 2:
        return g
    g[:, 4, 0] = SH_C2[0] * y
    g[:, 4, 1] = SH_C2[0] * x
    g[:, 5, 1] = SH_C2[1] * z
    g[:, 5, 2] = SH_C2[1] * y
    g[:, 6, 0] = SH_C2[2] * (-2.0 * x)
    g[:, 6, 1] = SH_C2[2] * (-2.0 * y)
    g[:, 6, 2] = SH_C2[2] * (4.0 * z)
    g[:, 7, 0] = SH_C2[3] * z
    g[:, 7, 2] = SH_C2[3] * x
    g[:, 8, 0] = SH_C2[4] * (2.0 * x)
    g[:, 8, 1] = SH_C2[4] * (-2.0 * y)
    if degree < 3:
        return g
    xx, yy, zz = x * x, y * y, z * z
    g[:, 9, 0] = SH_C3[0] * 6.0 * x * y
    g[:, 9, 1] = SH_C3[0] * (3.0 * xx - 3.0 * yy)
    g[:, 10, 0] = SH_C3[1] * y * z
    g[:, 10, 1] = SH_C3[1] * x * z
    g[:, 10, 2] = SH_C3[1] * x * y
    g[:, 11, 0] = SH_C3[2] * (-2.0 * x * y)
    g[:, 11, 1] = SH_C3[2] * (4.0 * zz - xx - 3.0 * yy)
    g[:, 11, 2] = SH_C3[2] * (8.0 * y * z)
    g[:, 12, 0] = SH_C3[3] * (-6.0 * x * z)
    g[:, 12, 1] = SH_C3[3] * (-6.0 * y * z)
    g[:, 12, 2] = SH_C3[3] * (6.0 * zz - 3.0 * xx - 3.0 * yy)
    g[:, 13, 0] = SH_C3[4] * (4.0 * zz - 3.0 * xx - yy)
    g[:, 13, 1] = SH_C3[4] * (-2.0 * x * y)
    g[:, 13, 2] = SH_C3[4] * (8.0 * x * z)
    g[:, 14, 0] = SH_C3[5] * (2.0 * x * z)
    g[:, 14, 1] = SH_C3[5] * (-2.0 * y * z)
    g[:, 14, 2] = SH_C3[5] * (xx - yy)
    g[:, 15, 0] = SH_C3[6] * (3.0 * xx - 3.0 * yy)
    g[:, 15, 1] = SH_C3[6] * (-6.0 * x * y)
    return g


def eval_sh(degree: int, coeffs: np.ndarray, dirs: np.ndarray):
    """Evaluate SH colors.

    coeffs: (N, num_coeffs, 3), dirs: (N, 3) unit vectors.
    Returns (rgb (N, 3) clamped at 0, cache for backward).
    """
    basis = sh_basis(degree, dirs)
    raw = np.einsum("nk,nkc->nc", basis, coeffs) + 0.5
    rgb = np.maximum(raw, 0.0)
    positive = raw > 0.0
    return rgb, (basis, positive)


def eval_sh_backward(degree: int, coeffs: np.ndarray, dirs: np.ndarray, cache, d_rgb: np.ndarray):
    """Gradients of eval_sh w.r.t. coefficients and direction.

    The clamp at zero uses the subgradient that is zero on the clamped side.
    Returns (d_coeffs (N, K, 3), d_dirs (N, 3)).
    """
    basis, positive = cache
    d_raw = d_rgb * positive
    d_coeffs = basis[:, :, None] * d_raw[:, None, :]
    bgrad = sh_basis_grad(degree, dirs)
    # d basis -> d dir, then contract over coeff and channel
    d_basis = np.einsum("nkc,nc->nk", coeffs, d_raw)
    d_dirs = np.einsum("nk,nkd->nd", d_basis, bgrad)
    return d_coeffs, d_dirs
