"""Command-line behavior: happy paths, exit codes, artifact formats."""

import csv
import json

import numpy as np
import pytest
from PIL import Image as PilImage

import blendsplat.cli as cli
from blendsplat.cli import EXIT_IO, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, main
from blendsplat.errors import TrainDivergence

SYNTH_ARGS = ["--seed", "5", "--expr-dim", "2", "--n-gaussians", "30",
              "--frames", "8", "--resolution", "24"]
CAM_ARGS = ["--width", "24", "--height", "24"]


@pytest.fixture(scope="module")
def scene_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("scene")
    assert main(["synth", str(d)] + SYNTH_ARGS) == EXIT_OK
    return d


@pytest.fixture(scope="module")
def teacher(scene_dir):
    return str(scene_dir / "teacher.hgas")


def train_args(scene_dir, out, cfg_path, seed="3"):
    cfg_path.write_text(json.dumps({"n_init_points": 100, "sh_degree": 1}))
    return ["train", str(scene_dir), str(out), "--config", str(cfg_path),
            "--iters", "10", "--seed", seed, "--quiet"]


def test_synth_writes_dataset_and_teacher(scene_dir):
    manifest = json.loads((scene_dir / "manifest.json").read_text())
    assert manifest["expr_dim"] == 2
    assert len(manifest["frames"]) == 8
    assert (scene_dir / "teacher.hgas").exists()
    assert (scene_dir / "frames" / "00000.png").exists()


def test_train_writes_checkpoint_and_log(scene_dir, tmp_path, capsys):
    out = tmp_path / "model.hgas"
    assert main(train_args(scene_dir, out, tmp_path / "cfg.json")) == EXIT_OK
    assert out.exists()
    log_lines = (tmp_path / "model.log.jsonl").read_text().splitlines()
    assert len(log_lines) == 10
    assert json.loads(log_lines[-1])["iter"] == 10
    assert f"checkpoint written to {out}" in capsys.readouterr().out


def test_train_same_seed_gives_identical_checkpoints(scene_dir, tmp_path):
    outs = []
    for name in ("a.hgas", "b.hgas"):
        out = tmp_path / name
        assert main(train_args(scene_dir, out, tmp_path / "cfg.json")) == EXIT_OK
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_train_missing_dataset_dir(tmp_path, capsys):
    code = main(["train", str(tmp_path / "nope"), str(tmp_path / "m.hgas")])
    assert code == EXIT_USAGE
    assert "dataset directory not found" in capsys.readouterr().err


def test_train_missing_config_file(scene_dir, tmp_path):
    args = ["train", str(scene_dir), str(tmp_path / "m.hgas"),
            "--config", str(tmp_path / "nope.json")]
    assert main(args) == EXIT_USAGE


def test_train_bad_config_key(scene_dir, tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"learning_rate": 1.0}))
    code = main(["train", str(scene_dir), str(tmp_path / "m.hgas"), "--config", str(cfg)])
    assert code == EXIT_USAGE
    assert "bad config" in capsys.readouterr().err


def test_train_dataset_without_init_bounds(tmp_path):
    from blendsplat.dataset import write_dataset
    from test_dataset import make_frames

    ds_dir = tmp_path / "ds"
    write_dataset(ds_dir, make_frames(), expr_dim=2)
    assert main(["train", str(ds_dir), str(tmp_path / "m.hgas")]) == EXIT_USAGE


def test_train_divergence_maps_to_numeric_exit(scene_dir, tmp_path, monkeypatch, capsys):
    def explode(*a, **k):
        raise TrainDivergence("non-finite loss at iteration 3", snapshot_path="/tmp/snap.hgas")

    monkeypatch.setattr(cli, "train", explode)
    code = main(train_args(scene_dir, tmp_path / "m.hgas", tmp_path / "cfg.json"))
    assert code == EXIT_NUMERIC
    err = capsys.readouterr().err
    assert "numeric failure" in err and "snapshot: /tmp/snap.hgas" in err


def test_render_written_png(teacher, tmp_path):
    out = tmp_path / "frame.png"
    code = main(["render", teacher, str(out), "--expr", "[0.4, 0.6]"] + CAM_ARGS)
    assert code == EXIT_OK
    with PilImage.open(out) as im:
        assert im.size == (24, 24)
        assert im.mode == "RGB"


def test_render_expr_file(teacher, tmp_path):
    expr_path = tmp_path / "expr.json"
    expr_path.write_text("[0.1, 0.9]")
    out = tmp_path / "frame.png"
    args = ["render", teacher, str(out), "--expr-file", str(expr_path)] + CAM_ARGS
    assert main(args) == EXIT_OK
    assert out.exists()


def test_render_requires_an_expression(teacher, tmp_path, capsys):
    assert main(["render", teacher, str(tmp_path / "f.png")]) == EXIT_USAGE
    assert "--expr" in capsys.readouterr().err


def test_render_rejects_bad_expr_json(teacher, tmp_path):
    args = ["render", teacher, str(tmp_path / "f.png"), "--expr", "[0.4,"]
    assert main(args) == EXIT_USAGE


def test_render_missing_expr_file_is_io_error(teacher, tmp_path):
    args = ["render", teacher, str(tmp_path / "f.png"),
            "--expr-file", str(tmp_path / "nope.json")]
    assert main(args) == EXIT_IO


def test_missing_checkpoint_is_io_error(tmp_path, capsys):
    args = ["render", str(tmp_path / "nope.hgas"), str(tmp_path / "f.png"),
            "--expr", "[0, 0]"]
    assert main(args) == EXIT_IO
    assert "i/o error" in capsys.readouterr().err


def test_unknown_flag_is_usage_error(teacher, tmp_path):
    args = ["render", teacher, str(tmp_path / "f.png"), "--frobnicate"]
    assert main(args) == EXIT_USAGE


def test_help_exits_cleanly():
    assert main(["--help"]) == EXIT_OK


def test_animate_renders_nested_and_inline_cameras(teacher, tmp_path):
    seq = {
        "frames": [
            {"expr": [0.2, 0.8],
             "camera": {"eye": [0, 0, 3.2], "width": 24, "height": 24}},
            {"expr": [0.8, 0.2], "eye": [0.4, 0.1, 3.0], "width": 24, "height": 24},
        ]
    }
    seq_path = tmp_path / "seq.json"
    seq_path.write_text(json.dumps(seq))
    out_dir = tmp_path / "anim"
    assert main(["animate", teacher, str(seq_path), str(out_dir)]) == EXIT_OK
    assert (out_dir / "00000.png").exists() and (out_dir / "00001.png").exists()


def test_animate_names_the_bad_frame(teacher, tmp_path, capsys):
    seq_path = tmp_path / "seq.json"
    seq_path.write_text(json.dumps({"frames": [{"expr": [0, 0], "camera": {}}]}))
    code = main(["animate", teacher, str(seq_path), str(tmp_path / "anim")])
    assert code == EXIT_USAGE
    assert "sequence frame 0" in capsys.readouterr().err


def test_animate_rejects_empty_sequence(teacher, tmp_path):
    seq_path = tmp_path / "seq.json"
    seq_path.write_text(json.dumps({"frames": []}))
    assert main(["animate", teacher, str(seq_path), str(tmp_path / "anim")]) == EXIT_USAGE


def test_animate_missing_sequence_file(teacher, tmp_path):
    args = ["animate", teacher, str(tmp_path / "nope.json"), str(tmp_path / "anim")]
    assert main(args) == EXIT_USAGE


def test_eval_reports_metric_table(teacher, scene_dir, tmp_path, capsys):
    out = tmp_path / "metrics.json"
    code = main(["eval", teacher, str(scene_dir), "--split", "test", "--out", str(out)])
    assert code == EXIT_OK
    table = json.loads(capsys.readouterr().out)
    assert table == json.loads(out.read_text())
    assert table["frames"] == 1  # every fifth of 8 frames
    # the checkpoint IS the teacher, so reconstruction error is quantization only
    assert table["PSNR"] > 45.0
    assert table["SSIM"] > 0.99
    assert table["L2"] < 1e-4
    assert table["time_s"] > 0.0


def test_eval_empty_split_is_usage_error(teacher, tmp_path, capsys):
    from blendsplat.dataset import write_dataset
    from test_dataset import make_frames

    ds_dir = tmp_path / "ds"
    write_dataset(ds_dir, make_frames(), expr_dim=2)  # no test split
    assert main(["eval", teacher, str(ds_dir)]) == EXIT_USAGE
    assert "no test frames" in capsys.readouterr().err


def test_basis_vis_writes_png(teacher, tmp_path):
    out = tmp_path / "basis1.png"
    args = ["basis-vis", teacher, str(out), "--index", "1", "--scale", "0.8"] + CAM_ARGS
    assert main(args) == EXIT_OK
    assert out.exists()


def test_basis_vis_index_out_of_range(teacher, tmp_path, capsys):
    args = ["basis-vis", teacher, str(tmp_path / "b.png"), "--index", "5"]
    assert main(args) == EXIT_USAGE
    assert "0..1" in capsys.readouterr().err


def test_peel_writes_one_image_per_fraction(teacher, tmp_path):
    out_dir = tmp_path / "peels"
    args = ["peel", teacher, str(out_dir), "--expr", "[0.5, 0.5]",
            "--fractions", "0,0.5,0.9"] + CAM_ARGS
    assert main(args) == EXIT_OK
    names = sorted(p.name for p in out_dir.iterdir())
    assert names == ["peel_000.png", "peel_050.png", "peel_090.png"]


def test_peel_rejects_fraction_outside_unit_interval(teacher, tmp_path):
    args = ["peel", teacher, str(tmp_path / "p"), "--expr", "[0.5, 0.5]",
            "--fractions", "0,1.5"] + CAM_ARGS
    assert main(args) == EXIT_USAGE


def test_opacity_diff_writes_png(teacher, tmp_path):
    out = tmp_path / "diff.png"
    args = ["opacity-diff", teacher, str(out), "--expr-i", "[0.1, 0.1]",
            "--expr-j", "[0.9, 0.9]"] + CAM_ARGS
    assert main(args) == EXIT_OK
    assert out.exists()


def test_bench_writes_csv(teacher, tmp_path):
    out = tmp_path / "bench.csv"
    args = ["bench", teacher, str(out), "--resolutions", "16,24",
            "--thread-list", "1", "--reps", "1"]
    assert main(args) == EXIT_OK
    with open(out) as fh:
        rows = list(csv.DictReader(fh))
    assert [r["width"] for r in rows] == ["16", "24"]
    assert all(r["n_gaussians"] == "30" for r in rows)
    assert all(float(r["fps"]) > 0 for r in rows)
    assert all(r["threads"] == "1" for r in rows)


def test_bench_rejects_garbled_lists(teacher, tmp_path):
    args = ["bench", teacher, str(tmp_path / "b.csv"), "--resolutions", "16,big"]
    assert main(args) == EXIT_USAGE


def test_thread_clamp_reports_actual_count():
    import numba

    assert cli.set_thread_count(10_000) == numba.config.NUMBA_NUM_THREADS
    assert cli.set_thread_count(-3) == 1
    assert cli.set_thread_count(None) == numba.config.NUMBA_NUM_THREADS
