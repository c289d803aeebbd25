"""Slow, obviously-correct reference renderer and finite-difference helper.

Everything here is written independently of the tiled rasterizer: scalar
per-Gaussian projection, textbook spherical harmonics polynomials with
closed-form constants, and a single-threaded per-pixel loop over ALL
Gaussians in global depth order (no tiles, no binning). The clamp constants
match the fast path exactly so agreement is exact rather than asymptotic.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

_K0 = 0.5 * math.sqrt(1.0 / math.pi)
_K1 = math.sqrt(3.0 / (4.0 * math.pi))
_K2_OFF = 0.5 * math.sqrt(15.0 / math.pi)  # xy, yz, xz terms
_K2_ZZ = 0.25 * math.sqrt(5.0 / math.pi)
_K2_XXYY = 0.25 * math.sqrt(15.0 / math.pi)
_K3_0 = 0.25 * math.sqrt(35.0 / (2.0 * math.pi))
_K3_1 = 0.5 * math.sqrt(105.0 / math.pi)
_K3_2 = 0.25 * math.sqrt(21.0 / (2.0 * math.pi))
_K3_3 = 0.25 * math.sqrt(7.0 / math.pi)


def sh_basis_reference(degree: int, d: np.ndarray) -> np.ndarray:
    """Real SH basis from first principles, one direction at a time."""
    x, y, z = d
    vals = [_K0]
    if degree >= 1:
        vals += [-_K1 * y, _K1 * z, -_K1 * x]
    if degree >= 2:
        vals += [
            _K2_OFF * x * y,
            -_K2_OFF * y * z,
            _K2_ZZ * (3.0 * z * z - 1.0),
            -_K2_OFF * x * z,
            _K2_XXYY * (x * x - y * y),
        ]
    if degree >= 3:
        vals += [
            -_K3_0 * y * (3.0 * x * x - y * y),
            _K3_1 * x * y * z,
            -_K3_2 * y * (5.0 * z * z - 1.0),
            _K3_3 * z * (5.0 * z * z - 3.0),
            -_K3_2 * x * (5.0 * z * z - 1.0),
            0.5 * _K3_1 * z * (x * x - y * y),
            -_K3_0 * x * (x * x - 3.0 * y * y),
        ]
    return np.array(vals)


@njit(cache=True)
def _oracle_composite(order, mu2d, conic, rgb, alpha, radius2, bg, width, height, out):
    for py in range(height):
        pyf = py + 0.5
        for px in range(width):
            pxf = px + 0.5
            T = 1.0
            cr = 0.0
            cg = 0.0
            cb = 0.0
            for k in range(order.shape[0]):
                j = order[k]
                dx = pxf - mu2d[j, 0]
                dy = pyf - mu2d[j, 1]
                if dx * dx + dy * dy > radius2[j]:
                    continue
                power = -0.5 * (conic[j, 0] * dx * dx + conic[j, 2] * dy * dy) - conic[j, 1] * dx * dy
                if power > 0.0:
                    continue
                a = alpha[j] * np.exp(power)
                if a < 1.0 / 255.0:
                    continue
                if a > 0.99:
                    a = 0.99
                cr += rgb[j, 0] * a * T
                cg += rgb[j, 1] * a * T
                cb += rgb[j, 2] * a * T
                T *= 1.0 - a
                if T < 1e-4:
                    break
            out[py, px, 0] = cr + bg[0] * T
            out[py, px, 1] = cg + bg[1] * T
            out[py, px, 2] = cb + bg[2] * T


def oracle_render(params, camera, background=(1.0, 1.0, 1.0)) -> np.ndarray:
    """Brute-force render of resolved frame parameters. Returns (H, W, 3) float64."""
    n = params.mu_eff.shape[0]
    w_rot = camera.world_to_cam[:3, :3]
    w_tr = camera.world_to_cam[:3, 3]
    cam_center = -w_rot.T @ w_tr
    lim_x = 1.3 * (0.5 * camera.width / camera.fx)
    lim_y = 1.3 * (0.5 * camera.height / camera.fy)
    degree = int(round(math.sqrt(params.sh.shape[1]))) - 1

    mu2d_list, conic_list, rgb_list, alpha_list, r2_list, depth_list = [], [], [], [], [], []
    for i in range(n):
        mu = np.asarray(params.mu_eff[i], dtype=np.float64)
        t = w_rot @ mu + w_tr
        if t[2] <= camera.znear:
            continue
        rx = t[0] / t[2]
        ry = t[1] / t[2]
        if abs(rx) > lim_x or abs(ry) > lim_y:
            continue

        q = np.asarray(params.rot_eff[i], dtype=np.float64)
        q = q / max(np.linalg.norm(q), 1e-12)
        qw, qx, qy, qz = q
        R = np.array(
            [
                [1 - 2 * (qy * qy + qz * qz), 2 * (qx * qy - qw * qz), 2 * (qx * qz + qw * qy)],
                [2 * (qx * qy + qw * qz), 1 - 2 * (qx * qx + qz * qz), 2 * (qy * qz - qw * qx)],
                [2 * (qx * qz - qw * qy), 2 * (qy * qz + qw * qx), 1 - 2 * (qx * qx + qy * qy)],
            ]
        )
        scale = np.exp(np.asarray(params.log_scale[i], dtype=np.float64))
        ms = R @ np.diag(scale)
        cov = ms @ ms.T

        tz = t[2]
        txc = min(max(rx, -lim_x), lim_x) * tz
        tyc = min(max(ry, -lim_y), lim_y) * tz
        J = np.array(
            [
                [camera.fx / tz, 0.0, -camera.fx * txc / (tz * tz)],
                [0.0, camera.fy / tz, -camera.fy * tyc / (tz * tz)],
            ]
        )
        V = J @ w_rot
        c2 = V @ cov @ V.T
        A = c2[0, 0] + 0.3
        B = c2[0, 1]
        C = c2[1, 1] + 0.3
        det = A * C - B * B
        if det <= 0:
            continue
        mid = 0.5 * (A + C)
        lam = mid + math.sqrt(max(mid * mid - det, 0.0))
        radius = math.ceil(3.0 * math.sqrt(lam))

        view = mu - cam_center
        view = view / max(np.linalg.norm(view), 1e-12)
        basis = sh_basis_reference(degree, view)
        color = np.maximum(basis @ np.asarray(params.sh[i], dtype=np.float64) + 0.5, 0.0)

        mu2d_list.append([camera.fx * t[0] / tz + camera.cx, camera.fy * t[1] / tz + camera.cy])
        conic_list.append([C / det, -B / det, A / det])
        rgb_list.append(color)
        alpha_list.append(float(params.alpha[i]))
        r2_list.append(float(radius) ** 2)
        depth_list.append(tz)

    out = np.empty((camera.height, camera.width, 3), dtype=np.float64)
    bg = np.asarray(background, dtype=np.float64)
    if not depth_list:
        out[:] = bg
        return out
    order = np.argsort(np.array(depth_list), kind="stable").astype(np.int64)
    _oracle_composite(
        order,
        np.array(mu2d_list),
        np.array(conic_list),
        np.array(rgb_list),
        np.array(alpha_list),
        np.array(r2_list),
        bg,
        camera.width,
        camera.height,
        out,
    )
    return out


def finite_diff(loss_fn, x: np.ndarray, h: float = 1e-4, coords=None) -> np.ndarray:
    """Central finite differences of loss_fn w.r.t. x.

    coords optionally restricts evaluation to the given flat indices (the
    remaining entries of the returned gradient are NaN so accidental use is
    loud). loss_fn receives a modified copy and must not mutate it.
    """
    x = np.asarray(x, dtype=np.float64)
    flat = x.reshape(-1)
    grad = np.full(flat.shape, np.nan)
    if coords is None:
        idx_iter = range(flat.shape[0])
    else:
        idx_iter = [
            int(np.ravel_multi_index(c, x.shape)) if isinstance(c, tuple) else int(c)
            for c in coords
        ]
    for i in idx_iter:
        xp = flat.copy()
        xp[i] += h
        lp = loss_fn(xp.reshape(x.shape))
        xm = flat.copy()
        xm[i] -= h
        lm = loss_fn(xm.reshape(x.shape))
        grad[i] = (lp - lm) / (2.0 * h)
    return grad.reshape(x.shape)
