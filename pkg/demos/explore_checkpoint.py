"""Take a trained checkpoint apart visually: basis columns, peels, opacity diff.

Three inspection renders on one checkpoint (by default the one
demos/fit_toy_head.py writes):

- one-hot expression renders show what each latent basis column contributes
  on its own, at the strongest value that component reached in training;
- opacity peels keep only the most opaque fraction of gaussians, exposing
  the structural core under the soft shell;
- an opacity-difference map localizes which pixels two expressions disagree
  on, which is how you check that a component moves the region it should.

Usage:
    python demos/explore_checkpoint.py /tmp/blendsplat-demo/fit.hgas --out /tmp/blendsplat-demo/inspect
"""

from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np
from PIL import Image as PilImage

from blendsplat import (
    load_checkpoint,
    look_at,
    peel_render,
    read_expr_ranges,
    render_frame,
    render_opacity_diff,
    resolve_frame,
)


def save_png(img: np.ndarray, path: Path):
    arr = np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    path.parent.mkdir(parents=True, exist_ok=True)
    PilImage.fromarray(arr).save(path)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("checkpoint", nargs="?", default="/tmp/blendsplat-demo/fit.hgas")
    ap.add_argument("--out", default="/tmp/blendsplat-demo/inspect", help="output directory")
    ap.add_argument("--resolution", type=int, default=256)
    args = ap.parse_args()
    out = Path(args.out)

    cloud = load_checkpoint(args.checkpoint)
    ranges = read_expr_ranges(args.checkpoint)
    if ranges is None:
        ranges = np.stack([-np.ones(cloud.expr_dim), np.ones(cloud.expr_dim)])
        print("checkpoint carries no expression ranges; assuming [-1, 1]")
    camera = look_at(
        (0.0, 0.0, 3.2), (0.0, 0.0, 0.0),
        width=args.resolution, height=args.resolution,
    )

    n_basis = min(cloud.expr_dim, 4)
    print(f"rendering {n_basis} one-hot basis columns")
    for i in range(n_basis):
        low, high = ranges[0, i], ranges[1, i]
        strongest = high if abs(high) >= abs(low) else low
        expr = np.zeros(cloud.expr_dim)
        expr[i] = strongest
        img, _, _, _ = render_frame(cloud, expr, camera)
        save_png(img, out / f"basis_{i}.png")

    print("rendering opacity peels at fractions 1.0, 0.6, 0.3, 0.1")
    neutral = np.zeros(cloud.expr_dim)
    params = resolve_frame(cloud, neutral, camera)
    for f in (1.0, 0.6, 0.3, 0.1):
        img = peel_render(params, camera, f)
        save_png(img, out / f"peel_{int(round(f * 100)):03d}.png")

    # Diff the two most extreme poses of the widest component against each
    # other; the bright pixels are where that component actually acts.
    comp = int(np.argmax(ranges[1] - ranges[0]))
    print(f"rendering opacity difference for component {comp}")
    expr_i = np.zeros(cloud.expr_dim)
    expr_j = np.zeros(cloud.expr_dim)
    expr_i[comp] = ranges[0, comp]
    expr_j[comp] = ranges[1, comp]
    mapped, _ = render_opacity_diff(cloud, expr_i, expr_j, camera)
    save_png(mapped, out / f"opacity_diff_{comp}.png")

    print(f"wrote {n_basis + 5} images to {out}")


if __name__ == "__main__":
    main()
