"""Streaming render service: one loaded model, frames on demand.

Endpoints:
  GET /info            model metadata for driving UIs
  WS  /stream          JSON render requests in, frames out

Each websocket request is answered in order by exactly one message: a binary
frame ([uint32 LE header length][header JSON][raw RGB8 rows]) on success, or
a JSON text error that always carries the request_id and leaves the
connection open. Per connection at most `QUEUE_DEPTH` requests may be
pending; further requests are refused immediately with a busy error rather
than silently dropped.
"""

from __future__ import annotations

import asyncio
import json
import struct
import threading
import time

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from starlette.concurrency import run_in_threadpool

from .backends import resolve_frame
from .camera import camera_from_spec
from .errors import ShapeError
from .model import AnimGaussianCloud
from .rasterizer import peel_render, render_frame, render_opacity_diff

QUEUE_DEPTH = 4
DEFAULT_MAX_RESOLUTION = 512

_MODES = ("color", "peel", "opacity_diff")


class _ServiceState:
    def __init__(self, cloud: AnimGaussianCloud, expr_ranges, max_resolution: int):
        self.cloud = cloud
        self.expr_ranges = expr_ranges
        self.max_resolution = max_resolution
        self.render_lock = threading.Lock()  # weights immutable; kernels single-flight


class RequestError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


def _parse_expr(state, raw, field: str) -> np.ndarray:
    expr = np.asarray(raw if raw is not None else [], dtype=np.float64)
    if expr.shape != (state.cloud.expr_dim,):
        raise RequestError(
            "bad_request",
            f"{field} must have {state.cloud.expr_dim} components, got {expr.size}",
        )
    if not np.all(np.isfinite(expr)):
        raise RequestError("bad_request", f"{field} contains non-finite values")
    return expr


def render_request(state: _ServiceState, req: dict) -> tuple[dict, bytes]:
    """Validate and render one request; returns (frame header, payload)."""
    width = int(req.get("width", 0))
    height = int(req.get("height", 0))
    if width <= 0 or height <= 0:
        raise RequestError("bad_request", "width and height must be positive")
    if width * height > state.max_resolution**2:
        raise RequestError(
            "oversize",
            f"{width}x{height} exceeds the {state.max_resolution}^2 pixel budget",
        )
    expr = _parse_expr(state, req.get("expr"), "expr")
    try:
        camera = camera_from_spec(req.get("camera"), width=width, height=height)
    except (ShapeError, TypeError, ValueError) as exc:
        raise RequestError("bad_request", f"bad camera spec: {exc}") from exc
    if camera.width != width or camera.height != height:
        camera = camera.resized(width, height)
    background = tuple(req.get("background", (1.0, 1.0, 1.0)))
    if len(background) != 3:
        raise RequestError("bad_request", "background must be an RGB triple")
    mode = req.get("mode", "color")
    if mode not in _MODES:
        raise RequestError("bad_request", f"mode must be one of {_MODES}")

    t0 = time.perf_counter()
    with state.render_lock:
        if mode == "color":
            img, _, _, _ = render_frame(state.cloud, expr, camera, background=background)
        elif mode == "peel":
            fraction = float(req.get("fraction", 0.0))
            if not 0.0 <= fraction <= 1.0:
                raise RequestError("bad_request", "fraction must be in [0, 1]")
            params = resolve_frame(state.cloud, expr, camera)
            img = peel_render(params, camera, fraction, background=background)
        else:
            expr_ref = _parse_expr(state, req.get("expr_ref"), "expr_ref")
            img, _ = render_opacity_diff(state.cloud, expr_ref, expr, camera)
    render_ms = (time.perf_counter() - t0) * 1e3

    payload = np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8).tobytes()
    header = {
        "type": "frame",
        "request_id": req.get("request_id"),
        "render_ms": round(render_ms, 3),
        "width": width,
        "height": height,
    }
    return header, payload


def encode_frame(header: dict, payload: bytes) -> bytes:
    head = json.dumps(header).encode("utf-8")
    return struct.pack("<I", len(head)) + head + payload


def decode_frame(blob: bytes) -> tuple[dict, bytes]:
    """Inverse of encode_frame, for clients and tests."""
    (head_len,) = struct.unpack_from("<I", blob, 0)
    header = json.loads(blob[4 : 4 + head_len].decode("utf-8"))
    return header, blob[4 + head_len :]


def _error_text(request_id, code: str, message: str) -> str:
    return json.dumps(
        {"type": "error", "request_id": request_id, "code": code, "message": message}
    )


def create_app(
    cloud: AnimGaussianCloud,
    expr_ranges=None,
    max_resolution: int = DEFAULT_MAX_RESOLUTION,
) -> FastAPI:
    state = _ServiceState(cloud, expr_ranges, max_resolution)
    app = FastAPI(title="blendsplat render service")
    app.state.render_state = state

    @app.get("/info")
    def info():
        er = state.expr_ranges
        return {
            "B": state.cloud.expr_dim,
            "f_dim": state.cloud.feat_dim,
            "k": state.cloud.sh_degree,
            "N": state.cloud.n,
            "backend": state.cloud.backend_tag,
            "expr_ranges": None if er is None else np.asarray(er).tolist(),
            "max_resolution": state.max_resolution,
        }

    async def _drain(ws: WebSocket, queue: asyncio.Queue):
        while True:
            req = await queue.get()
            try:
                header, payload = await run_in_threadpool(render_request, state, req)
                await ws.send_bytes(encode_frame(header, payload))
            except RequestError as exc:
                await ws.send_text(_error_text(req.get("request_id"), exc.code, str(exc)))

    @app.websocket("/stream")
    async def stream(ws: WebSocket):
        await ws.accept()
        queue: asyncio.Queue = asyncio.Queue(maxsize=QUEUE_DEPTH)
        worker = asyncio.create_task(_drain(ws, queue))
        try:
            while True:
                text = await ws.receive_text()
                try:
                    req = json.loads(text)
                    if not isinstance(req, dict):
                        raise ValueError("request must be a JSON object")
                except (json.JSONDecodeError, ValueError) as exc:
                    await ws.send_text(_error_text(None, "bad_request", str(exc)))
                    continue
                if queue.full():
                    await ws.send_text(
                        _error_text(
                            req.get("request_id"), "busy",
                            f"more than {QUEUE_DEPTH} requests pending",
                        )
                    )
                    continue
                queue.put_nowait(req)
        except WebSocketDisconnect:
            pass
        finally:
            worker.cancel()

    return app
