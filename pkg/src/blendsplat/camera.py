"""Pinhole camera description and look-at construction.

Conventions: world_to_cam maps world points into a camera frame whose +z axis
points into the scene (a point is in front of the camera when t_z > 0).
Pixel (row r, col c) is sampled at continuous coordinates (c + 0.5, r + 0.5),
so the principal point of a centered sensor is (width / 2, height / 2).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError


@dataclass
class Camera:
    """Intrinsics plus a rigid world-to-camera transform."""

    world_to_cam: np.ndarray  # (4, 4) float64, row-major
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    znear: float = 0.01
    zfar: float = 100.0

    def __post_init__(self):
        w2c = np.asarray(self.world_to_cam, dtype=np.float64)
        if w2c.shape != (4, 4):
            raise ShapeError(f"world_to_cam must be 4x4, got {w2c.shape}")
        bottom = w2c[3]
        if not np.allclose(bottom, [0.0, 0.0, 0.0, 1.0], atol=1e-6):
            raise ShapeError("world_to_cam bottom row must be [0, 0, 0, 1]")
        rot = w2c[:3, :3]
        if not np.allclose(rot @ rot.T, np.eye(3), atol=1e-5):
            raise ShapeError("rotation block is not orthonormal")
        if abs(np.linalg.det(rot) - 1.0) > 1e-5:
            raise ShapeError("rotation block must have determinant +1")
        if self.width < 8 or self.height < 8:
            raise ShapeError("image size must be at least 8x8")
        if self.fx <= 0 or self.fy <= 0:
            raise ShapeError("focal lengths must be positive")
        if not (0 < self.znear < self.zfar):
            raise ShapeError("need 0 < znear < zfar")
        self.world_to_cam = w2c

    @property
    def rotation(self) -> np.ndarray:
        """(3, 3) world-to-camera rotation block."""
        return self.world_to_cam[:3, :3]

    @property
    def translation(self) -> np.ndarray:
        """(3,) world-to-camera translation block."""
        return self.world_to_cam[:3, 3]

    @property
    def center(self) -> np.ndarray:
        """Camera origin in world coordinates."""
        return -self.rotation.T @ self.translation

    @property
    def tan_fovx(self) -> float:
        return 0.5 * self.width / self.fx

    @property
    def tan_fovy(self) -> float:
        return 0.5 * self.height / self.fy

    def to_cam(self, points: np.ndarray) -> np.ndarray:
        """Transform (N, 3) world points into camera space."""
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    def resized(self, width: int, height: int) -> "Camera":
        """Same view rendered at a different resolution (rescaled intrinsics)."""
        sx = width / self.width
        sy = height / self.height
        return Camera(
            world_to_cam=self.world_to_cam.copy(),
            fx=self.fx * sx,
            fy=self.fy * sy,
            cx=self.cx * sx,
            cy=self.cy * sy,
            width=width,
            height=height,
            znear=self.znear,
            zfar=self.zfar,
        )


def look_at(
    eye,
    target,
    up=(0.0, 1.0, 0.0),
    fov_deg: float = 40.0,
    width: int = 512,
    height: int = 512,
    znear: float = 0.01,
    zfar: float = 100.0,
) -> Camera:
    """Build a camera at `eye` looking toward `target`.

    fov_deg is the horizontal field of view; fy is matched to fx so pixels
    are square.
    """
    eye = np.asarray(eye, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    up = np.asarray(up, dtype=np.float64)
    fwd = target - eye
    norm = np.linalg.norm(fwd)
    if norm < 1e-12:
        raise ShapeError("eye and target coincide")
    fwd = fwd / norm
    right = np.cross(fwd, up)
    rnorm = np.linalg.norm(right)
    if rnorm < 1e-12:
        raise ShapeError("up is parallel to the view direction")
    right = right / rnorm
    down = np.cross(fwd, right)  # completes a right-handed (right, down, fwd) frame

    rot = np.stack([right, down, fwd])  # world-to-camera rows
    w2c = np.eye(4)
    w2c[:3, :3] = rot
    w2c[:3, 3] = -rot @ eye

    fx = 0.5 * width / np.tan(0.5 * np.deg2rad(fov_deg))
    return Camera(
        world_to_cam=w2c,
        fx=fx,
        fy=fx,
        cx=width / 2.0,
        cy=height / 2.0,
        width=width,
        height=height,
        znear=znear,
        zfar=zfar,
    )


def camera_from_spec(spec: dict, width: int | None = None, height: int | None = None) -> Camera:
    """Build a camera from a JSON-style dict.

    Two forms are accepted: a raw matrix ({world_to_cam: 16 floats row-major,
    fx, fy, cx, cy}) or a look-at spec ({eye, target?, up?, fov?}). A width or
    height inside the spec wins over the keyword defaults; intrinsics belong
    to the spec's size, so callers wanting another size should use resized()
    rather than forcing different numbers here.
    """
    if not isinstance(spec, dict):
        raise ShapeError("camera spec must be an object")
    w = int(spec.get("width", width) or 0)
    h = int(spec.get("height", height) or 0)
    if w <= 0 or h <= 0:
        raise ShapeError("camera spec needs positive width and height")
    if "world_to_cam" in spec:
        w2c = spec["world_to_cam"]
        if not isinstance(w2c, (list, tuple)) or len(w2c) != 16:
            raise ShapeError("world_to_cam must be 16 floats row-major")
        try:
            return Camera(
                world_to_cam=np.asarray(w2c, dtype=np.float64).reshape(4, 4),
                fx=float(spec["fx"]),
                fy=float(spec["fy"]),
                cx=float(spec["cx"]),
                cy=float(spec["cy"]),
                width=w,
                height=h,
            )
        except KeyError as exc:
            raise ShapeError(f"matrix camera spec missing field {exc}") from exc
    if "eye" not in spec:
        raise ShapeError("camera spec needs either world_to_cam or eye")
    return look_at(
        np.asarray(spec["eye"], dtype=np.float64),
        np.asarray(spec.get("target", (0.0, 0.0, 0.0)), dtype=np.float64),
        up=np.asarray(spec.get("up", (0.0, 1.0, 0.0)), dtype=np.float64),
        fov_deg=float(spec.get("fov", 40.0)),
        width=w,
        height=h,
    )


@dataclass
class CameraPath:
    """Helper for smooth orbit paths used by demos and the animate command."""

    target: np.ndarray = field(default_factory=lambda: np.zeros(3))
    radius: float = 3.0
    height: float = 0.0
    fov_deg: float = 40.0

    def at(self, azimuth_rad: float, width: int, height_px: int) -> Camera:
        eye = np.array(
            [
                self.target[0] + self.radius * np.sin(azimuth_rad),
                self.target[1] + self.height,
                self.target[2] + self.radius * np.cos(azimuth_rad),
            ]
        )
        return look_at(eye, self.target, fov_deg=self.fov_deg, width=width, height=height_px)
