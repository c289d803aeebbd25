"""Acceptance gate: one test per release criterion, one verdict line each.

Every test prints (and appends to reports/acceptance.txt) a single line

    [criterion N] <name>: PASS|FAIL -- <measurement vs budget>

so the release record is readable without pytest output. Budgets that name a
thread count request it first and report what the host actually granted;
nothing here is scaled to the machine.
"""

import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from blendsplat.backends import blend_features, resolve_frame
from blendsplat.camera import look_at
from blendsplat.cli import set_thread_count
from blendsplat.errors import DegenerateModel
from blendsplat.losses import LossWeights, loss_total, psnr
from blendsplat.model import TrainConfig, init_cloud, scene_extent_from_cameras
from blendsplat.optim import Adam
from blendsplat.oracle import finite_diff, oracle_render
from blendsplat.rasterizer import full_backward, rasterize_forward, render_frame
from blendsplat.synth import synth_scene
from blendsplat.trainer import (
    SPLIT_SCALE_FACTOR,
    DensifyStats,
    densify_and_prune,
    train,
)
from blendsplat.transforms import normalize_quat
from blendsplat.checkpoint import save_checkpoint

from conftest import small_cloud

REPORT_DIR = Path(__file__).resolve().parent.parent / "reports"


def report(line: str):
    REPORT_DIR.mkdir(exist_ok=True)
    with open(REPORT_DIR / "acceptance.txt", "a") as fh:
        fh.write(line + "\n")
    print(line)


@pytest.fixture(scope="module")
def threads():
    return set_thread_count(8)


@pytest.fixture(scope="module")
def fit_scene():
    """The 500-gaussian, 100-frame teacher scene used by the fit criteria."""
    return synth_scene(seed=1, b_dim=8, n_gaussians=500, n_frames=100, resolution=128)


def student_for(dataset, backend: str, iters: int, seed: int = 0):
    config = TrainConfig(
        expr_dim=8, n_init_points=2500, iters=iters, seed=seed, backend=backend
    )
    cloud = init_cloud(
        config,
        bounds=(dataset.init_bounds[0], dataset.init_bounds[1]),
        rng=np.random.default_rng(config.seed),
    )
    cloud.scene_extent = scene_extent_from_cameras([f.camera for f in dataset.train])
    return cloud, config


def heldout_psnr(cloud, dataset) -> float:
    vals = []
    for frame in dataset.test:
        img, _, _, _ = render_frame(
            cloud, frame.expr, frame.camera, background=dataset.background
        )
        vals.append(psnr(img, frame.image.astype(np.float64)))
    return float(np.mean(vals))


def test_criterion_1_rasterizer_matches_oracle():
    t0 = time.perf_counter()
    backends = ("FeatureBlend", "DeltaPose", "ChangeAll", "ConditionOnly", "ExplicitBlend")
    worst = 0.0
    for i in range(20):
        rng = np.random.default_rng(1000 + i)
        cloud = small_cloud(
            backend=backends[i % len(backends)],
            n=int(rng.integers(1, 65)),
            sh_degree=int(rng.integers(0, 4)),
            seed=1000 + i,
        )
        az, el = rng.uniform(-0.6, 0.6), rng.uniform(-0.3, 0.3)
        r = rng.uniform(2.0, 3.0)
        eye = (r * np.sin(az), r * np.sin(el), r * np.cos(az) * np.cos(el))
        cam = look_at(eye, (0, 0, 0), width=64, height=64)
        e = rng.uniform(0.0, 1.0, cloud.expr_dim)
        bg = tuple(rng.uniform(0.0, 1.0, 3))

        img, _, params, _ = render_frame(cloud, e, cam, background=bg)
        ref = oracle_render(params, cam, bg)
        worst = max(worst, float(np.abs(img - ref).max()))
    elapsed = time.perf_counter() - t0

    ok = worst <= 1e-4 and elapsed < 10.0
    report(
        f"[criterion 1] rasterizer-oracle equivalence: {'PASS' if ok else 'FAIL'} -- "
        f"max |fast-oracle| {worst:.2e} (budget 1e-4) over 20 scenes in {elapsed:.1f} s (budget 10 s)"
    )
    assert worst <= 1e-4
    assert elapsed < 10.0


def _gradcheck_scene(backend: str, n: int, seed: int):
    """FD-vs-analytic mismatch count for one rendered scene under loss_total."""
    cloud = small_cloud(backend, n=n, seed=seed, alpha_band=(0.05, 0.3))
    if cloud.mlp is not None and "dmu" in cloud.mlp.heads:
        rng_heads = np.random.default_rng(seed + 1)
        for head in ("dmu", "rot"):
            W, b = cloud.mlp.heads[head]
            cloud.mlp.heads[head] = (
                rng_heads.normal(0, 0.03, W.shape).astype(np.float32),
                rng_heads.normal(0, 0.01, b.shape).astype(np.float32),
            )
    cam = look_at((0.25, 0.12, 2.3), (0, 0, 0), width=32, height=32)
    rng = np.random.default_rng(seed + 2)
    gt = rng.uniform(0.0, 1.0, (32, 32, 3))  # nowhere equal: keeps L1 off its kink
    e = np.array([0.55, 0.35, 0.75])
    bg = (0.15, 0.35, 0.6)
    weights = LossWeights(lambda_1=0.8, lambda_ssim=0.2, lambda_mu=0.01)

    def loss_value(c):
        img, _, params, _ = render_frame(c, e, cam, background=bg)
        return float(loss_total(img, gt, weights, dmu=params.dmu)[0])

    img, _, params, cache = render_frame(cloud, e, cam, background=bg)
    _, d_img, d_dmu = loss_total(img, gt, weights, dmu=params.dmu)
    bundle = full_backward(cloud, params, cache, d_img, d_dmu_extra=d_dmu)

    checked, offenders = 0, []
    for name, arr, _ in cloud.named_parameters():
        total = int(np.prod(arr.shape))
        coords = (
            list(range(total))
            if total <= 4
            else sorted(rng.choice(total, size=4, replace=False).tolist())
        )

        def loss_at(v, name=name):
            c2 = cloud.copy()
            c2.set_param(name, v)
            return loss_value(c2)

        num = finite_diff(loss_at, arr.astype(np.float64), h=1e-5, coords=coords)
        for c in coords:
            a = bundle[name].reshape(-1)[c]
            m = num.reshape(-1)[c]
            if abs(a - m) / max(abs(a), abs(m), 1e-6) > 1e-3:
                offenders.append(f"{backend}/{name}[{c}]")
            checked += 1
    return checked, offenders


def test_criterion_2_gradients_match_finite_differences():
    t0 = time.perf_counter()
    checked, offenders = 0, []
    for backend, n, seed in (("FeatureBlend", 1, 20), ("FeatureBlend", 4, 30), ("DeltaPose", 4, 40)):
        c, off = _gradcheck_scene(backend, n, seed)
        checked += c
        offenders += off
    elapsed = time.perf_counter() - t0

    good = 1.0 - len(offenders) / max(checked, 1)
    ok = good >= 0.99 and elapsed < 180.0
    report(
        f"[criterion 2] gradient correctness: {'PASS' if ok else 'FAIL'} -- "
        f"{checked - len(offenders)}/{checked} coords within rel 1e-3 "
        f"({good:.1%}, budget ≥99%) in {elapsed:.0f} s (budget 180 s)"
    )
    assert good >= 0.99, offenders
    assert elapsed < 180.0


def test_criterion_3_teacher_student_fit(fit_scene, threads):
    _, dataset = fit_scene
    cloud, config = student_for(dataset, "FeatureBlend", iters=1200)
    t0 = time.perf_counter()
    cloud, _ = train(dataset, cloud, config)
    value = heldout_psnr(cloud, dataset)
    elapsed = time.perf_counter() - t0

    ok = value >= 28.0 and elapsed <= 900.0
    report(
        f"[criterion 3] teacher-student fit: {'PASS' if ok else 'FAIL'} -- "
        f"{value:.2f} dB on {len(dataset.test)} held-out frames (budget ≥28 dB), "
        f"{config.iters} iters, N {cloud.n}, {elapsed / 60:.1f} min "
        f"(budget 15 min, granted {threads}/8 threads)"
    )
    assert value >= 28.0
    assert elapsed <= 900.0


def test_criterion_4_blend_linearity():
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 7))
        b = int(rng.integers(1, 7))
        f = int(rng.integers(1, 9))
        F = rng.normal(0, 1, (n, b, f))
        f0 = rng.normal(0, 1, (n, f))
        e1 = rng.normal(0, 1, b)
        e2 = rng.normal(0, 1, b)
        lhs = blend_features(F, f0, e1 + e2) - f0
        rhs = (blend_features(F, f0, e1) - f0) + (blend_features(F, f0, e2) - f0)
        denom = np.maximum(np.maximum(np.abs(lhs), np.abs(rhs)), 1.0)
        worst = max(worst, float((np.abs(lhs - rhs) / denom).max()))

    ok = worst <= 1e-5
    report(
        f"[criterion 4] blend linearity: {'PASS' if ok else 'FAIL'} -- "
        f"max rel deviation {worst:.2e} over 1000 draws (budget 1e-5)"
    )
    assert worst <= 1e-5


def _unit_rot(cloud):
    cloud.rot = normalize_quat(cloud.rot.astype(np.float64)).astype(np.float32)
    return cloud


def test_criterion_5_density_control_bookkeeping():
    config = TrainConfig(expr_dim=3, n_init_points=6)
    notes = []

    # prune: exactly the rows whose observed max alpha sits below tau_alpha go
    cloud = _unit_rot(small_cloud(n=6, seed=51))
    cloud.scene_extent = 100.0
    before = cloud.copy()
    stats = DensifyStats.zeros(6)
    stats.max_alpha = np.array([0.5, 0.004, 0.5, 0.5, 0.0049, 0.5])
    stats.count[:] = 1
    counts = densify_and_prune(cloud, stats, config)
    assert counts == {"pruned": 2, "cloned": 0, "split": 0}
    for name in cloud.gaussian_column_names():
        np.testing.assert_array_equal(getattr(cloud, name), getattr(before, name)[[0, 2, 3, 5]])
    notes.append("prune=row-exact")

    # clone: appended row is a bitwise copy, so exp(log_scale) is preserved bitwise
    cloud = _unit_rot(small_cloud(n=4, seed=52))
    cloud.scene_extent = 100.0  # all splats count as small
    before = cloud.copy()
    stats = DensifyStats.zeros(4)
    stats.max_alpha[:] = 0.5
    stats.count[:] = 1
    stats.grad_sum = np.array([0.0, 0.0, 1.0, 0.0])
    counts = densify_and_prune(cloud, stats, config)
    assert counts == {"pruned": 0, "cloned": 1, "split": 0}
    assert np.array_equal(cloud.log_scale[4], before.log_scale[2])
    assert np.array_equal(np.exp(cloud.log_scale[4]), np.exp(before.log_scale[2]))
    notes.append("clone=bitwise")

    # split: two children, parent removed, scale divided by 1.6 exactly
    # (stored as an exact log-domain subtraction)
    cloud = _unit_rot(small_cloud(n=4, seed=53))
    cloud.scene_extent = 1e-6  # all splats count as large
    before = cloud.copy()
    stats = DensifyStats.zeros(4)
    stats.max_alpha[:] = 0.5
    stats.count[:] = 1
    stats.grad_sum = np.array([0.0, 1.0, 0.0, 0.0])
    counts = densify_and_prune(cloud, stats, config, rng=np.random.default_rng(5))
    assert counts == {"pruned": 0, "cloned": 0, "split": 1}
    assert cloud.n == 5
    expected = before.log_scale[1] - np.float32(math.log(SPLIT_SCALE_FACTOR))
    np.testing.assert_array_equal(cloud.log_scale[3], expected)
    np.testing.assert_array_equal(cloud.log_scale[4], expected)
    np.testing.assert_allclose(
        np.exp(cloud.log_scale[3].astype(np.float64)),
        np.exp(before.log_scale[1].astype(np.float64)) / SPLIT_SCALE_FACTOR,
        rtol=1e-6,
    )
    notes.append(f"split=/{SPLIT_SCALE_FACTOR}")

    # optimizer moments follow the identical surgery, zeros for new rows
    cloud = _unit_rot(small_cloud(n=5, seed=54))
    cloud.scene_extent = 1e-6
    cfg5 = TrainConfig(expr_dim=3, n_init_points=5)
    opt = Adam(cloud, cfg5)
    opt.m["mu"] = np.arange(15, dtype=np.float32).reshape(5, 3)
    stats = DensifyStats.zeros(5)
    stats.max_alpha = np.array([0.5, 0.001, 0.5, 0.5, 0.5])
    stats.count[:] = 1
    stats.grad_sum = np.array([0.0, 0.0, 0.0, 1.0, 0.0])  # row 3: pruned->idx 2, split
    densify_and_prune(cloud, stats, cfg5, opt=opt)
    np.testing.assert_array_equal(
        opt.m["mu"],
        np.vstack([[[0, 1, 2], [6, 7, 8], [12, 13, 14]], np.zeros((2, 3), np.float32)]),
    )
    assert opt.m["mu"].shape[0] == cloud.n
    notes.append("opt=co-indexed")

    # pruning everything is a hard failure, not a silent empty model
    cloud = _unit_rot(small_cloud(n=3, seed=55))
    stats = DensifyStats.zeros(3)
    with pytest.raises(DegenerateModel):
        densify_and_prune(cloud, stats, TrainConfig(expr_dim=3, n_init_points=3))

    report(f"[criterion 5] densify/prune bookkeeping: PASS -- {', '.join(notes)}")


def test_criterion_6_training_is_deterministic(tmp_path):
    _, dataset = synth_scene(seed=2, b_dim=3, n_gaussians=60, n_frames=12, resolution=32)
    paths = []
    for run in ("a", "b"):
        config = TrainConfig(
            expr_dim=3, n_init_points=150, sh_degree=1, iters=120, seed=5,
            densify_start=40, densify_stop=100, densify_interval=20,
        )
        cloud = init_cloud(
            config,
            bounds=(dataset.init_bounds[0], dataset.init_bounds[1]),
            rng=np.random.default_rng(config.seed),
        )
        cloud.scene_extent = scene_extent_from_cameras([f.camera for f in dataset.train])
        cloud, log = train(dataset, cloud, config)
        path = tmp_path / f"{run}.hgas"
        save_checkpoint(cloud, path)
        paths.append(path)
        final_n = cloud.n

    identical = paths[0].read_bytes() == paths[1].read_bytes()
    report(
        f"[criterion 6] deterministic training: {'PASS' if identical else 'FAIL'} -- "
        f"two 120-iter runs with densification (final N {final_n}) produced "
        f"{'bit-identical' if identical else 'DIFFERING'} checkpoints"
    )
    assert identical


def test_criterion_7_default_config_audit():
    config = TrainConfig()
    expected = {
        "lr_mlp": 1.6e-4,
        "lr_mu": 1.6e-4,
        "lr_feat": 0.0025,
        "lr_scale": 0.005,
        "lr_rot": 0.001,
        "feat_dim": 32,
        "expr_dim": 52,
        "hidden_width": 64,
        "sh_degree": 3,
        "lambda_1": 0.8,
        "lambda_ssim": 0.2,
        "densify_start": 500,
        "densify_stop": 15000,
    }
    wrong = {k: (getattr(config, k), v) for k, v in expected.items() if getattr(config, k) != v}
    report(
        f"[criterion 7] default config audit: {'PASS' if not wrong else 'FAIL'} -- "
        f"{len(expected)} defaults checked" + (f", mismatches {wrong}" if wrong else "")
    )
    assert not wrong


def test_criterion_8_throughput_budget(threads):
    config = TrainConfig(expr_dim=8, n_init_points=25000, sh_degree=3, seed=0)
    cloud = init_cloud(config, bounds=((-1.0,) * 3, (1.0,) * 3), rng=np.random.default_rng(0))
    cloud.scene_extent = 3.2
    e = np.zeros(8)

    ms = {}
    for res in (64, 128, 256):
        cam = look_at((0, 0, 3.2), (0, 0, 0), width=res, height=res)
        render_frame(cloud, e, cam)  # compile/warm
        t0 = time.perf_counter()
        reps = 5
        for i in range(reps):
            render_frame(cloud, e, look_at((0.05 * i, 0, 3.2), (0, 0, 0), width=res, height=res))
        ms[res] = (time.perf_counter() - t0) / reps * 1e3
    fps = 1e3 / ms[256]

    # time must grow with pixel count, but far slower than linearly
    monotone = ms[64] <= ms[128] <= ms[256]
    sublinear = ms[256] / ms[64] < 16.0 and ms[128] / ms[64] < 4.0
    ok = fps >= 10.0 and monotone and sublinear
    report(
        f"[criterion 8] throughput budget: {'PASS' if ok else 'FAIL'} -- "
        f"{fps:.1f} fps at 256² with 25k gaussians (budget ≥10 fps on 8 threads; "
        f"granted {threads}/8), scaling 64/128/256² = "
        f"{ms[64]:.0f}/{ms[128]:.0f}/{ms[256]:.0f} ms "
        f"({'monotone, sublinear' if monotone and sublinear else 'BAD TREND'})"
    )
    assert monotone and sublinear
    assert fps >= 10.0, (
        f"{fps:.1f} fps on {threads} granted threads; the budget presumes 8"
    )


def test_criterion_9_backend_ablation_report(fit_scene, threads):
    _, dataset = fit_scene
    iters = 400  # identical reduced budget for every backend
    results = {}
    for backend in ("FeatureBlend", "ExplicitBlend", "ConditionOnly", "DeltaPose"):
        cloud, config = student_for(dataset, backend, iters=iters)
        t0 = time.perf_counter()
        cloud, _ = train(dataset, cloud, config)
        results[backend] = {
            "psnr_heldout": round(heldout_psnr(cloud, dataset), 3),
            "n_gaussians": cloud.n,
            "train_s": round(time.perf_counter() - t0, 1),
        }

    REPORT_DIR.mkdir(exist_ok=True)
    payload = {
        "scene": {"seed": 1, "expr_dim": 8, "n_gaussians": 500, "frames": 100, "resolution": 128},
        "budget": {"iters": iters, "n_init_points": 2500, "seed": 0, "threads": threads},
        "heldout_frames": len(dataset.test),
        "results": results,
    }
    out = REPORT_DIR / "ablation.json"
    out.write_text(json.dumps(payload, indent=1))

    ordered = sorted(results, key=lambda b: -results[b]["psnr_heldout"])
    summary = ", ".join(f"{b} {results[b]['psnr_heldout']:.2f}" for b in ordered)
    report(
        f"[criterion 9] backend ablation report (non-gating): PASS -- archived {out.name}; "
        f"held-out dB at {iters} iters: {summary}"
    )
    assert out.exists()
    assert set(results) == {"FeatureBlend", "ExplicitBlend", "ConditionOnly", "DeltaPose"}
