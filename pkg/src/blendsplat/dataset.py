"""Dataset manifest format: expression-tagged frames with per-frame cameras.

A dataset directory holds `manifest.json` plus the referenced PNG images.
The manifest is versioned; loaders reject unknown versions and malformed
frames loudly, naming the offending frame.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image as PilImage

from .camera import Camera
from .errors import FormatError, LoadError

MANIFEST_VERSION = 1
MANIFEST_NAME = "manifest.json"


@dataclass
class ExpressionFrame:
    """One training/eval sample: image, expression vector, camera."""

    image: np.ndarray  # (H, W, 3) float32 in [0, 1]
    expr: np.ndarray  # (B,) float64
    camera: Camera
    image_path: str = ""
    index: int = -1


@dataclass
class Dataset:
    train: list
    test: list
    expr_dim: int
    background: tuple = (1.0, 1.0, 1.0)
    init_bounds: np.ndarray | None = None  # (2, 3) AABB hint for initialization

    @property
    def frames(self):
        return self.train + self.test


def _load_image(path: Path) -> np.ndarray:
    if not path.exists():
        raise LoadError(f"image not found: {path}")
    with PilImage.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32)
    return arr / 255.0


def _frame_camera(rec: dict, i: int) -> Camera:
    w2c = rec.get("world_to_cam")
    if not isinstance(w2c, list) or len(w2c) != 16:
        got = len(w2c) if isinstance(w2c, list) else w2c
        raise FormatError(f"frame {i}: world_to_cam must be 16 floats row-major, got {got}")
    try:
        return Camera(
            world_to_cam=np.asarray(w2c, dtype=np.float64).reshape(4, 4),
            fx=float(rec["fx"]),
            fy=float(rec["fy"]),
            cx=float(rec["cx"]),
            cy=float(rec["cy"]),
            width=int(rec["width"]),
            height=int(rec["height"]),
        )
    except KeyError as exc:
        raise FormatError(f"frame {i}: missing camera field {exc}") from exc


def load_dataset(dataset_dir) -> Dataset:
    """Load and validate a dataset directory. Images become float32 [0, 1]."""
    root = Path(dataset_dir)
    manifest_path = root / MANIFEST_NAME
    if not manifest_path.exists():
        raise LoadError(f"no {MANIFEST_NAME} in {root}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"manifest is not valid JSON: {exc}") from exc

    version = manifest.get("version")
    if version != MANIFEST_VERSION:
        raise FormatError(f"unsupported manifest version {version!r}")
    records = manifest.get("frames", [])
    if not records:
        raise FormatError("manifest contains no frames")
    expr_dim = int(manifest.get("expr_dim", -1))
    if expr_dim < 1:
        raise FormatError("manifest must declare expr_dim >= 1")

    frames = []
    for i, rec in enumerate(records):
        expr = np.asarray(rec.get("expr", []), dtype=np.float64)
        if expr.shape != (expr_dim,):
            raise FormatError(
                f"frame {i}: expression has {expr.size} weights, expected {expr_dim}"
            )
        cam = _frame_camera(rec, i)
        img_path = root / rec["image_path"]
        img = _load_image(img_path)
        if img.shape != (cam.height, cam.width, 3):
            raise FormatError(
                f"frame {i}: image {img_path.name} is {img.shape[1]}x{img.shape[0]}, "
                f"manifest says {cam.width}x{cam.height}"
            )
        frames.append(
            ExpressionFrame(
                image=img, expr=expr, camera=cam, image_path=str(img_path), index=i
            )
        )

    n = len(frames)
    train_idx = manifest.get("train", list(range(n)))
    test_idx = manifest.get("test", [])
    for name, idx in (("train", train_idx), ("test", test_idx)):
        if any(not (0 <= j < n) for j in idx):
            raise FormatError(f"{name} split references a frame outside 0..{n - 1}")
    if not train_idx:
        raise FormatError("train split is empty")

    background = tuple(manifest.get("background", (1.0, 1.0, 1.0)))
    if len(background) != 3:
        raise FormatError("background must be an RGB triple")
    init_bounds = manifest.get("init_bounds")
    if init_bounds is not None:
        init_bounds = np.asarray(init_bounds, dtype=np.float64)
        if init_bounds.shape != (2, 3):
            raise FormatError("init_bounds must be a (2, 3) AABB")

    return Dataset(
        train=[frames[j] for j in train_idx],
        test=[frames[j] for j in test_idx],
        expr_dim=expr_dim,
        background=background,
        init_bounds=init_bounds,
    )


def write_dataset(
    dataset_dir,
    frames: list,
    expr_dim: int,
    background=(1.0, 1.0, 1.0),
    train_idx=None,
    test_idx=None,
    init_bounds=None,
):
    """Write frames (quantized to 8-bit PNG) and a manifest under dataset_dir.

    `frames` is a list of ExpressionFrame; image_path fields are assigned
    here. Returns the manifest dict.
    """
    root = Path(dataset_dir)
    (root / "frames").mkdir(parents=True, exist_ok=True)
    records = []
    for i, fr in enumerate(frames):
        rel = f"frames/{i:05d}.png"
        arr = np.clip(np.asarray(fr.image, dtype=np.float64), 0.0, 1.0)
        PilImage.fromarray(np.round(arr * 255.0).astype(np.uint8)).save(root / rel)
        cam = fr.camera
        records.append(
            {
                "image_path": rel,
                "expr": [float(v) for v in np.asarray(fr.expr, dtype=np.float64)],
                "world_to_cam": [float(v) for v in cam.world_to_cam.reshape(-1)],
                "fx": float(cam.fx),
                "fy": float(cam.fy),
                "cx": float(cam.cx),
                "cy": float(cam.cy),
                "width": int(cam.width),
                "height": int(cam.height),
            }
        )
    n = len(frames)
    manifest = {
        "version": MANIFEST_VERSION,
        "expr_dim": int(expr_dim),
        "background": [float(c) for c in background],
        "frames": records,
        "train": list(train_idx) if train_idx is not None else list(range(n)),
        "test": list(test_idx) if test_idx is not None else [],
    }
    if init_bounds is not None:
        manifest["init_bounds"] = np.asarray(init_bounds, dtype=np.float64).tolist()
    (root / MANIFEST_NAME).write_text(json.dumps(manifest, indent=1))
    return manifest
