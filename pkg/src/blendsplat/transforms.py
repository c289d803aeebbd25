"""Quaternion and 3D covariance math, forward and backward.

Quaternions are stored (w, x, y, z), never assumed normalized; every forward
path normalizes first so the stored parameters can drift freely under the
optimizer. All backward functions return gradients with respect to the raw
(unnormalized) parameters.
"""

from __future__ import annotations

import numpy as np


def normalize_quat(q: np.ndarray) -> np.ndarray:
    """Normalize (..., 4) quaternions to unit length."""
    q = np.asarray(q, dtype=np.float64)
    norm = np.linalg.norm(q, axis=-1, keepdims=True)
    return q / np.maximum(norm, 1e-12)


def quat_to_rot(q: np.ndarray) -> np.ndarray:
    """(N, 4) unit quaternions (w, x, y, z) -> (N, 3, 3) rotation matrices."""
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    R = np.empty(q.shape[:-1] + (3, 3), dtype=np.float64)
    R[..., 0, 0] = 1 - 2 * (y * y + z * z)
    R[..., 0, 1] = 2 * (x * y - w * z)
    R[..., 0, 2] = 2 * (x * z + w * y)
    R[..., 1, 0] = 2 * (x * y + w * z)
    R[..., 1, 1] = 1 - 2 * (x * x + z * z)
    R[..., 1, 2] = 2 * (y * z - w * x)
    R[..., 2, 0] = 2 * (x * z - w * y)
    R[..., 2, 1] = 2 * (y * z + w * x)
    R[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return R


def rot_backward_to_quat(q_unit: np.ndarray, d_R: np.ndarray) -> np.ndarray:
    """Chain (N, 3, 3) gradients through quat_to_rot.

    Returns (N, 4) gradients with respect to the UNIT quaternion; callers
    still need normalize_quat_backward to reach the raw parameters.
    """
    w, x, y, z = q_unit[..., 0], q_unit[..., 1], q_unit[..., 2], q_unit[..., 3]
    g = d_R
    d_w = 2 * (
        -z * g[..., 0, 1] + y * g[..., 0, 2]
        + z * g[..., 1, 0] - x * g[..., 1, 2]
        - y * g[..., 2, 0] + x * g[..., 2, 1]
    )
    d_x = 2 * (
        y * g[..., 0, 1] + z * g[..., 0, 2]
        + y * g[..., 1, 0] - 2 * x * g[..., 1, 1] - w * g[..., 1, 2]
        + z * g[..., 2, 0] + w * g[..., 2, 1] - 2 * x * g[..., 2, 2]
    )
    d_y = 2 * (
        -2 * y * g[..., 0, 0] + x * g[..., 0, 1] + w * g[..., 0, 2]
        + x * g[..., 1, 0] + z * g[..., 1, 2]
        - w * g[..., 2, 0] + z * g[..., 2, 1] - 2 * y * g[..., 2, 2]
    )
    d_z = 2 * (
        -2 * z * g[..., 0, 0] - w * g[..., 0, 1] + x * g[..., 0, 2]
        + w * g[..., 1, 0] - 2 * z * g[..., 1, 1] + y * g[..., 1, 2]
        + x * g[..., 2, 0] + y * g[..., 2, 1]
    )
    return np.stack([d_w, d_x, d_y, d_z], axis=-1)


def normalize_quat_backward(q_raw: np.ndarray, d_unit: np.ndarray) -> np.ndarray:
    """Chain gradients through q_hat = q / |q| back to raw q."""
    q_raw = np.asarray(q_raw, dtype=np.float64)
    norm = np.maximum(np.linalg.norm(q_raw, axis=-1, keepdims=True), 1e-12)
    q_hat = q_raw / norm
    inner = np.sum(q_hat * d_unit, axis=-1, keepdims=True)
    return (d_unit - q_hat * inner) / norm


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product a*b for (..., 4) quaternions (w, x, y, z)."""
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def quat_multiply_backward(a, b, d_out):
    """Gradients of the Hamilton product w.r.t. both factors."""
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    gw, gx, gy, gz = d_out[..., 0], d_out[..., 1], d_out[..., 2], d_out[..., 3]
    d_a = np.stack(
        [
            bw * gw + bx * gx + by * gy + bz * gz,
            -bx * gw + bw * gx - bz * gy + by * gz,
            -by * gw + bz * gx + bw * gy - bx * gz,
            -bz * gw - by * gx + bx * gy + bw * gz,
        ],
        axis=-1,
    )
    d_b = np.stack(
        [
            aw * gw + ax * gx + ay * gy + az * gz,
            -ax * gw + aw * gx + az * gy - ay * gz,
            -ay * gw - az * gx + aw * gy + ax * gz,
            -az * gw + ay * gx - ax * gy + aw * gz,
        ],
        axis=-1,
    )
    return d_a, d_b


def compute_cov3d(q_raw: np.ndarray, log_scale: np.ndarray):
    """World-space covariances Sigma = R S S^T R^T.

    q_raw: (N, 4) unnormalized quaternions, log_scale: (N, 3).
    Returns (cov (N, 3, 3), cache for the backward pass).
    """
    q_hat = normalize_quat(q_raw)
    R = quat_to_rot(q_hat)
    s = np.exp(np.asarray(log_scale, dtype=np.float64))
    M = R * s[:, None, :]  # column i scaled by s_i
    cov = M @ np.swapaxes(M, 1, 2)
    cache = (q_hat, R, s, M)
    return cov, cache


def compute_cov3d_backward(q_raw: np.ndarray, cache, d_cov: np.ndarray):
    """Chain (N, 3, 3) covariance gradients to (d_q_raw, d_log_scale).

    d_cov entries are treated as independent (full-matrix convention); the
    forward builds every entry explicitly so this is consistent.
    """
    q_hat, R, s, M = cache
    d_M = (d_cov + np.swapaxes(d_cov, 1, 2)) @ M
    # M = R diag(s): column i of M is s_i * R[:, i]
    d_s = np.einsum("nji,nji->ni", d_M, R)
    d_log_scale = d_s * s
    d_R = d_M * s[:, None, :]
    d_q_unit = rot_backward_to_quat(q_hat, d_R)
    d_q_raw = normalize_quat_backward(q_raw, d_q_unit)
    return d_q_raw, d_log_scale


def random_unit_quats(rng: np.random.Generator, n: int) -> np.ndarray:
    """Uniformly distributed unit quaternions, (n, 4) float64."""
    q = rng.standard_normal((n, 4))
    return normalize_quat(q)
