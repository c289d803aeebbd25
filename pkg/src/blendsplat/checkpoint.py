"""Binary checkpoint format for animatable Gaussian clouds.

Layout (all multi-byte values little-endian):

    bytes 0..3   magic b"HGAS"
    uint32       format version (currently 1)
    uint32       header length in bytes
    header       UTF-8 JSON describing shapes and scalar metadata
    payload      raw float32 tensor blocks, C-order, concatenated in the
                 exact order listed under header["tensors"]

The header carries backend_tag, dimensions, scene_extent, scene_bounds and
optional expression-range hints for driving UIs; the payload carries every
per-gaussian column, every MLP tensor, and (optionally) optimizer moments.
Round-trips are bit-exact because float32 storage is written verbatim.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError
from .mlp import TinyMLPWeights
from .model import AnimGaussianCloud

MAGIC = b"HGAS"
FORMAT_VERSION = 1


def _tensor_list(cloud: AnimGaussianCloud):
    """(name, array) pairs in serialization order."""
    out = []
    for name in cloud.gaussian_column_names():
        out.append((name, getattr(cloud, name)))
    if cloud.mlp is not None:
        for tname, arr in cloud.mlp.named_tensors():
            out.append((f"mlp.{tname}", arr))
    return out


def save_checkpoint(cloud: AnimGaussianCloud, path, optimizer_state=None, expr_ranges=None):
    """Serialize the cloud (and optionally optimizer moments) to `path`."""
    tensors = _tensor_list(cloud)
    opt_tensors = []
    opt_meta = None
    if optimizer_state is not None:
        opt_meta = {"it": int(optimizer_state["it"]), "t": {}, "tensors": []}
        for name in sorted(optimizer_state["m"]):
            opt_meta["t"][name] = int(optimizer_state["t"][name])
            for kind in ("m", "v"):
                tname = f"opt.{kind}.{name}"
                opt_meta["tensors"].append(tname)
                opt_tensors.append((tname, optimizer_state[kind][name]))

    header = {
        "backend_tag": cloud.backend_tag,
        "expr_dim": int(cloud.expr_dim),
        "feat_dim": int(cloud.feat_dim),
        "sh_degree": int(cloud.sh_degree),
        "n": int(cloud.n),
        "scene_extent": float(cloud.scene_extent),
        "scene_bounds": cloud.scene_bounds.astype(np.float64).tolist(),
        "mlp": None,
        "tensors": [
            {"name": name, "shape": list(arr.shape)} for name, arr in tensors + opt_tensors
        ],
        "optimizer": opt_meta,
    }
    if cloud.mlp is not None:
        header["mlp"] = {
            "n_hidden": len(cloud.mlp.hidden),
            "leaky_slope": float(cloud.mlp.leaky_slope),
            "heads": sorted(cloud.mlp.heads),
        }
    if expr_ranges is not None:
        er = np.asarray(expr_ranges, dtype=np.float64)
        if er.shape != (2, cloud.expr_dim):
            raise FormatError("expr_ranges must be (2, expr_dim) [low, high] rows")
        header["expr_ranges"] = er.tolist()

    header_bytes = json.dumps(header).encode("utf-8")
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(header_bytes)))
        fh.write(header_bytes)
        for _, arr in tensors + opt_tensors:
            if arr.dtype != np.float32:
                raise FormatError(f"tensor is {arr.dtype}, expected float32 storage")
            fh.write(np.ascontiguousarray(arr).tobytes())
    return path


def _read_exact(fh, count: int, what: str) -> bytes:
    data = fh.read(count)
    if len(data) != count:
        raise FormatError(f"truncated checkpoint while reading {what}")
    return data


def load_checkpoint(path, with_optimizer: bool = False):
    """Load a checkpoint; returns the cloud, or (cloud, optimizer_state)."""
    path = Path(path)
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4, "magic")
        if magic != MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
        version, header_len = struct.unpack("<II", _read_exact(fh, 8, "header sizes"))
        if version != FORMAT_VERSION:
            raise FormatError(f"unsupported checkpoint version {version}")
        try:
            header = json.loads(_read_exact(fh, header_len, "header").decode("utf-8"))
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise FormatError(f"corrupt checkpoint header: {exc}") from exc

        loaded = {}
        for spec in header["tensors"]:
            shape = tuple(int(s) for s in spec["shape"])
            nbytes = int(np.prod(shape, dtype=np.int64)) * 4
            raw = _read_exact(fh, nbytes, f"tensor {spec['name']}")
            loaded[spec["name"]] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()

    mlp = None
    if header["mlp"] is not None:
        meta = header["mlp"]
        hidden = []
        for i in range(int(meta["n_hidden"])):
            hidden.append((loaded[f"mlp.hidden{i}.W"], loaded[f"mlp.hidden{i}.b"]))
        heads = {
            name: (loaded[f"mlp.head.{name}.W"], loaded[f"mlp.head.{name}.b"])
            for name in meta["heads"]
        }
        mlp = TinyMLPWeights(hidden=hidden, heads=heads, leaky_slope=float(meta["leaky_slope"]))

    cloud = AnimGaussianCloud(
        mu=loaded["mu"],
        rot=loaded["rot"],
        log_scale=loaded["log_scale"],
        feat_basis=loaded["feat_basis"],
        feat_bias=loaded["feat_bias"],
        mlp=mlp,
        expr_dim=int(header["expr_dim"]),
        feat_dim=int(header["feat_dim"]),
        sh_degree=int(header["sh_degree"]),
        scene_extent=float(header["scene_extent"]),
        scene_bounds=np.asarray(header["scene_bounds"], dtype=np.float32),
        backend_tag=header["backend_tag"],
        color_basis=loaded.get("color_basis"),
        alpha_basis=loaded.get("alpha_basis"),
        sh_static=loaded.get("sh_static"),
        alpha_logit_static=loaded.get("alpha_logit_static"),
    )
    cloud.validate()
    if int(header["n"]) != cloud.n:
        raise FormatError(f"header says {header['n']} gaussians, columns say {cloud.n}")

    if not with_optimizer:
        return cloud
    opt_state = None
    if header.get("optimizer") is not None:
        meta = header["optimizer"]
        opt_state = {"it": int(meta["it"]), "t": {k: int(v) for k, v in meta["t"].items()},
                     "m": {}, "v": {}}
        for name in meta["t"]:
            opt_state["m"][name] = loaded[f"opt.m.{name}"]
            opt_state["v"][name] = loaded[f"opt.v.{name}"]
    return cloud, opt_state


def read_expr_ranges(path) -> np.ndarray | None:
    """Expression-range hints stored at save time, or None."""
    with open(path, "rb") as fh:
        if _read_exact(fh, 4, "magic") != MAGIC:
            raise FormatError("bad magic")
        version, header_len = struct.unpack("<II", _read_exact(fh, 8, "header sizes"))
        if version != FORMAT_VERSION:
            raise FormatError(f"unsupported checkpoint version {version}")
        header = json.loads(_read_exact(fh, header_len, "header").decode("utf-8"))
    er = header.get("expr_ranges")
    return None if er is None else np.asarray(er, dtype=np.float64)
