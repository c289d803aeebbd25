"""Command-line surface: thin wrappers over the library operations.

Exit codes: 0 success, 2 usage/config error, 3 numeric failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np
from PIL import Image as PilImage

from . import service as service_mod
from .backends import resolve_frame
from .camera import Camera, CameraPath, camera_from_spec, look_at
from .checkpoint import load_checkpoint, read_expr_ranges, save_checkpoint
from .dataset import load_dataset
from .errors import (
    BlendsplatError,
    DegenerateModel,
    FormatError,
    InitError,
    LoadError,
    ShapeError,
    TrainDivergence,
    UnsupportedDegree,
)
from .losses import mse, psnr, ssim
from .model import TrainConfig, init_cloud, scene_extent_from_cameras
from .rasterizer import peel_render, render_frame, render_opacity_diff
from .synth import synth_scene
from .trainer import train

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3
EXIT_IO = 4


class UsageError(Exception):
    pass


def set_thread_count(requested: int | None) -> int:
    """Clamp the requested render thread count to what numba can offer."""
    import numba

    limit = numba.config.NUMBA_NUM_THREADS
    n = limit if requested is None else max(1, min(requested, limit))
    numba.set_num_threads(n)
    return n


def _parse_vec(text: str, length: int, what: str) -> np.ndarray:
    try:
        parts = [float(p) for p in text.split(",")]
    except ValueError as exc:
        raise UsageError(f"{what} must be comma-separated floats: {exc}") from exc
    if len(parts) != length:
        raise UsageError(f"{what} needs {length} components, got {len(parts)}")
    return np.asarray(parts)


def _expr_from_args(args, attr="expr", required=True) -> np.ndarray | None:
    inline = getattr(args, attr, None)
    path = getattr(args, f"{attr}_file", None)
    if inline is not None:
        try:
            return np.asarray(json.loads(inline), dtype=np.float64)
        except json.JSONDecodeError as exc:
            raise UsageError(f"--{attr.replace('_', '-')} is not valid JSON: {exc}") from exc
    if path is not None:
        try:
            return np.asarray(json.loads(Path(path).read_text()), dtype=np.float64)
        except FileNotFoundError as exc:
            raise LoadError(str(exc)) from exc
        except json.JSONDecodeError as exc:
            raise FormatError(f"expression file is not valid JSON: {exc}") from exc
    if required:
        raise UsageError(f"provide --{attr.replace('_', '-')} or --{attr.replace('_', '-')}-file")
    return None


def _camera_from_args(args) -> Camera:
    eye = _parse_vec(args.eye, 3, "--eye")
    target = _parse_vec(args.target, 3, "--target")
    up = _parse_vec(args.up, 3, "--up")
    return look_at(
        eye, target, up=up, fov_deg=args.fov, width=args.width, height=args.height
    )


def _add_camera_flags(p: argparse.ArgumentParser):
    p.add_argument("--eye", default="0,0,3.2", help="camera position x,y,z")
    p.add_argument("--target", default="0,0,0", help="look-at point x,y,z")
    p.add_argument("--up", default="0,1,0", help="up hint x,y,z")
    p.add_argument("--fov", type=float, default=40.0, help="horizontal fov in degrees")
    p.add_argument("--width", type=int, default=512)
    p.add_argument("--height", type=int, default=512)


def _save_png(img: np.ndarray, path):
    arr = np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    PilImage.fromarray(arr).save(path)


def cmd_train(args) -> int:
    dataset_dir = Path(args.dataset)
    if not dataset_dir.is_dir():
        raise UsageError(f"dataset directory not found: {dataset_dir}")
    overrides = {}
    if args.config:
        cfg_path = Path(args.config)
        if not cfg_path.exists():
            raise UsageError(f"config file not found: {cfg_path}")
        try:
            overrides = json.loads(cfg_path.read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"config is not valid JSON: {exc}") from exc
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.iters is not None:
        overrides["iters"] = args.iters
    try:
        config = TrainConfig.from_dict(overrides)
    except (InitError, TypeError, UnsupportedDegree) as exc:
        raise UsageError(f"bad config: {exc}") from exc

    dataset = load_dataset(dataset_dir)
    if dataset.expr_dim != config.expr_dim:
        config = TrainConfig.from_dict({**overrides, "expr_dim": dataset.expr_dim})
    bounds = dataset.init_bounds
    if bounds is None:
        raise UsageError("dataset manifest lacks init_bounds; pass a config with bounds")
    rng = np.random.default_rng(config.seed)
    cloud = init_cloud(config, bounds=(bounds[0], bounds[1]), rng=rng)
    cloud.scene_extent = scene_extent_from_cameras([f.camera for f in dataset.train])

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    log_path = args.log or str(out.with_suffix(".log.jsonl"))
    printer = None
    if not args.quiet:
        def printer(rec):
            if rec["iter"] % 100 == 0 or rec["iter"] == 1:
                print(
                    f"iter {rec['iter']:6d}  loss {rec['loss']:.5f}  "
                    f"psnr {rec['psnr_train']:6.2f}  N {rec['N']}",
                    flush=True,
                )

    cloud, log = train(
        dataset, cloud, config,
        log_path=log_path, snapshot_dir=str(out.parent), progress=printer,
    )
    exprs = np.stack([f.expr for f in dataset.train])
    expr_ranges = np.stack([exprs.min(axis=0), exprs.max(axis=0)])
    save_checkpoint(cloud, out, expr_ranges=expr_ranges)
    if log:
        print(json.dumps(log[-1]))
    print(f"checkpoint written to {out}")
    return EXIT_OK


def cmd_render(args) -> int:
    cloud = load_checkpoint(args.checkpoint)
    expr = _expr_from_args(args)
    camera = _camera_from_args(args)
    img, _, _, _ = render_frame(cloud, expr, camera, background=tuple(args.background))
    _save_png(img, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def _sequence_camera(rec: dict, i: int) -> Camera:
    spec = rec.get("camera", rec)  # camera fields may be nested or inline
    try:
        return camera_from_spec(spec, width=512, height=512)
    except ShapeError as exc:
        raise FormatError(f"sequence frame {i}: {exc}") from exc


def cmd_animate(args) -> int:
    cloud = load_checkpoint(args.checkpoint)
    seq_path = Path(args.sequence)
    if not seq_path.exists():
        raise UsageError(f"sequence file not found: {seq_path}")
    try:
        seq = json.loads(seq_path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"sequence is not valid JSON: {exc}") from exc
    records = seq.get("frames", [])
    if not records:
        raise FormatError("sequence contains no frames")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for i, rec in enumerate(records):
        expr = np.asarray(rec["expr"], dtype=np.float64)
        camera = _sequence_camera(rec, i)
        img, _, _, _ = render_frame(cloud, expr, camera, background=tuple(args.background))
        _save_png(img, out_dir / f"{i:05d}.png")
    print(f"wrote {len(records)} frames to {out_dir}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cloud = load_checkpoint(args.checkpoint)
    dataset = load_dataset(args.dataset)
    frames = dataset.test if args.split == "test" else dataset.train
    if not frames:
        raise UsageError(f"dataset has no {args.split} frames")
    rows = []
    for frame in frames:
        t0 = time.perf_counter()
        img, _, _, _ = render_frame(cloud, frame.expr, frame.camera, background=dataset.background)
        dt = time.perf_counter() - t0
        img = np.clip(img, 0.0, 1.0)  # score the displayable image, like render writes
        gt = frame.image.astype(np.float64)
        rows.append((mse(img, gt), psnr(img, gt), ssim(img, gt), dt))
    table = {
        "frames": len(rows),
        "L2": float(np.mean([r[0] for r in rows])),
        "PSNR": float(np.mean([r[1] for r in rows])),
        "SSIM": float(np.mean([r[2] for r in rows])),
        "time_s": float(np.mean([r[3] for r in rows])),
    }
    print(json.dumps(table, indent=1))
    if args.out:
        Path(args.out).write_text(json.dumps(table, indent=1))
    return EXIT_OK


def cmd_basis_vis(args) -> int:
    cloud = load_checkpoint(args.checkpoint)
    if not 0 <= args.index < cloud.expr_dim:
        raise UsageError(f"--index must be in 0..{cloud.expr_dim - 1}")
    neutral = _expr_from_args(args, attr="neutral_expr", required=False)
    expr = np.zeros(cloud.expr_dim) if neutral is None else np.asarray(neutral, dtype=np.float64)
    if expr.shape != (cloud.expr_dim,):
        raise UsageError(f"neutral expression needs {cloud.expr_dim} components")
    expr = expr.copy()
    expr[args.index] += args.scale
    camera = _camera_from_args(args)
    img, _, _, _ = render_frame(cloud, expr, camera, background=tuple(args.background))
    _save_png(img, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_peel(args) -> int:
    cloud = load_checkpoint(args.checkpoint)
    expr = _expr_from_args(args)
    camera = _camera_from_args(args)
    try:
        fractions = [float(f) for f in args.fractions.split(",")]
    except ValueError as exc:
        raise UsageError(f"--fractions must be comma-separated floats: {exc}") from exc
    params = resolve_frame(cloud, expr, camera)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for f in fractions:
        if not 0.0 <= f <= 1.0:
            raise UsageError("peel fractions must be in [0, 1]")
        img = peel_render(params, camera, f, background=tuple(args.background))
        _save_png(img, out_dir / f"peel_{int(round(f * 100)):03d}.png")
    print(f"wrote {len(fractions)} peels to {out_dir}")
    return EXIT_OK


def cmd_opacity_diff(args) -> int:
    cloud = load_checkpoint(args.checkpoint)
    expr_i = _expr_from_args(args, attr="expr_i")
    expr_j = _expr_from_args(args, attr="expr_j")
    camera = _camera_from_args(args)
    mapped, _ = render_opacity_diff(cloud, expr_i, expr_j, camera)
    _save_png(mapped, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_bench(args) -> int:
    cloud = load_checkpoint(args.checkpoint)
    try:
        resolutions = [int(r) for r in args.resolutions.split(",")]
        thread_counts = [int(t) for t in args.thread_list.split(",")]
    except ValueError as exc:
        raise UsageError(f"bad --resolutions/--thread-list: {exc}") from exc
    expr = np.zeros(cloud.expr_dim)
    path = CameraPath(radius=3.2, fov_deg=40.0)
    rows = []
    for threads in thread_counts:
        actual = set_thread_count(threads)
        for res in resolutions:
            camera = path.at(0.0, res, res)
            render_frame(cloud, expr, camera)  # warm the kernels
            t0 = time.perf_counter()
            n_reps = max(1, args.reps)
            for rep in range(n_reps):
                camera = path.at(0.02 * rep, res, res)
                render_frame(cloud, expr, camera)
            ms = (time.perf_counter() - t0) * 1e3 / n_reps
            rows.append(
                {
                    "width": res, "height": res, "threads": actual,
                    "n_gaussians": cloud.n, "ms_per_frame": round(ms, 3),
                    "fps": round(1e3 / ms, 3),
                }
            )
            print(f"{res}x{res} threads={actual}: {ms:.1f} ms/frame")
    with open(args.out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    cloud = load_checkpoint(args.checkpoint)
    expr_ranges = read_expr_ranges(args.checkpoint)
    app = service_mod.create_app(cloud, expr_ranges=expr_ranges, max_resolution=args.max_resolution)
    host, _, port = args.bind.partition(":")
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8000), log_level="warning")
    return EXIT_OK


def cmd_synth(args) -> int:
    teacher, dataset = synth_scene(
        seed=args.seed, b_dim=args.expr_dim, n_gaussians=args.n_gaussians,
        n_frames=args.frames, resolution=args.resolution, out_dir=args.out_dir,
    )
    teacher_path = Path(args.out_dir) / "teacher.hgas"
    exprs = np.stack([f.expr for f in dataset.frames])
    save_checkpoint(teacher, teacher_path,
                    expr_ranges=np.stack([exprs.min(axis=0), exprs.max(axis=0)]))
    print(
        f"wrote {len(dataset.train)}+{len(dataset.test)} frames and teacher "
        f"checkpoint to {args.out_dir}"
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="blendsplat",
        description="Expression-driven Gaussian splatting: train, render, inspect, serve.",
    )
    parser.add_argument("--threads", type=int, default=None, help="render thread count")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="optimize a model against a dataset")
    p.add_argument("dataset", help="dataset directory with manifest.json")
    p.add_argument("out", help="output checkpoint path")
    p.add_argument("--config", help="JSON file of TrainConfig overrides")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--iters", type=int, default=None)
    p.add_argument("--log", help="JSONL training log path")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("render", help="render one expression from a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("out")
    p.add_argument("--expr", help="inline JSON expression vector")
    p.add_argument("--expr-file", help="JSON file with the expression vector")
    p.add_argument("--background", type=float, nargs=3, default=(1.0, 1.0, 1.0))
    _add_camera_flags(p)
    p.set_defaults(fn=cmd_render)

    p = sub.add_parser("animate", help="render an (expr, camera) sequence to PNG frames")
    p.add_argument("checkpoint")
    p.add_argument("sequence", help="JSON sequence manifest")
    p.add_argument("out_dir")
    p.add_argument("--background", type=float, nargs=3, default=(1.0, 1.0, 1.0))
    p.set_defaults(fn=cmd_animate)

    p = sub.add_parser("eval", help="L2/PSNR/SSIM/time table on a dataset split")
    p.add_argument("checkpoint")
    p.add_argument("dataset")
    p.add_argument("--split", choices=("train", "test"), default="test")
    p.add_argument("--out", help="optional JSON output path")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("basis-vis", help="render a one-hot expression component")
    p.add_argument("checkpoint")
    p.add_argument("out")
    p.add_argument("--index", type=int, required=True)
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--neutral-expr", dest="neutral_expr", help="inline JSON base expression")
    p.add_argument("--neutral-expr-file", dest="neutral_expr_file")
    p.add_argument("--background", type=float, nargs=3, default=(1.0, 1.0, 1.0))
    _add_camera_flags(p)
    p.set_defaults(fn=cmd_basis_vis)

    p = sub.add_parser("peel", help="depth-peeled renders revealing interior structure")
    p.add_argument("checkpoint")
    p.add_argument("out_dir")
    p.add_argument("--expr", help="inline JSON expression vector")
    p.add_argument("--expr-file")
    p.add_argument("--fractions", default="0,0.25,0.5,0.75")
    p.add_argument("--background", type=float, nargs=3, default=(1.0, 1.0, 1.0))
    _add_camera_flags(p)
    p.set_defaults(fn=cmd_peel)

    p = sub.add_parser("opacity-diff", help="signed opacity-change map between expressions")
    p.add_argument("checkpoint")
    p.add_argument("out")
    p.add_argument("--expr-i", dest="expr_i", help="inline JSON reference expression")
    p.add_argument("--expr-i-file", dest="expr_i_file")
    p.add_argument("--expr-j", dest="expr_j", help="inline JSON target expression")
    p.add_argument("--expr-j-file", dest="expr_j_file")
    _add_camera_flags(p)
    p.set_defaults(fn=cmd_opacity_diff)

    p = sub.add_parser("bench", help="ms/frame CSV across resolutions and thread counts")
    p.add_argument("checkpoint")
    p.add_argument("out")
    p.add_argument("--resolutions", default="64,128,256,512")
    p.add_argument("--thread-list", dest="thread_list", default="1")
    p.add_argument("--reps", type=int, default=5)
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("serve", help="run the streaming render service")
    p.add_argument("checkpoint")
    p.add_argument("--bind", default="127.0.0.1:8000")
    p.add_argument("--max-resolution", type=int, default=512)
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("synth", help="generate a synthetic teacher dataset")
    p.add_argument("out_dir")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--expr-dim", dest="expr_dim", type=int, default=8)
    p.add_argument("--n-gaussians", dest="n_gaussians", type=int, default=500)
    p.add_argument("--frames", type=int, default=100)
    p.add_argument("--resolution", type=int, default=128)
    p.set_defaults(fn=cmd_synth)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        if args.command != "serve":  # serve configures threads per request load
            set_thread_count(args.threads)
        return args.fn(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InitError, FormatError, ShapeError, UnsupportedDegree) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TrainDivergence, DegenerateModel) as exc:
        extra = getattr(exc, "snapshot_path", None)
        note = f" (snapshot: {extra})" if extra else ""
        print(f"numeric failure: {exc}{note}", file=sys.stderr)
        return EXIT_NUMERIC
    except (LoadError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except BlendsplatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
