"""Dataset directory round trips and manifest validation errors."""

import json
from pathlib import Path

import numpy as np
import pytest

from blendsplat.camera import look_at
from blendsplat.dataset import (
    MANIFEST_NAME,
    ExpressionFrame,
    load_dataset,
    write_dataset,
)
from blendsplat.errors import FormatError, LoadError


def make_frames(n=3, size=16, expr_dim=2, seed=0):
    rng = np.random.default_rng(seed)
    frames = []
    for i in range(n):
        cam = look_at((0.1 * i, 0.2, 2.0), (0, 0, 0), width=size, height=size)
        img = rng.uniform(0, 1, (size, size, 3)).astype(np.float32)
        frames.append(ExpressionFrame(image=img, expr=rng.uniform(0, 1, expr_dim), camera=cam))
    return frames


def test_round_trip_preserves_everything_but_quantization(tmp_path):
    frames = make_frames()
    bounds = np.array([[-1.0, -1.0, -1.0], [1.0, 1.0, 2.0]])
    write_dataset(
        tmp_path, frames, expr_dim=2, background=(0.2, 0.3, 0.4),
        train_idx=[0, 2], test_idx=[1], init_bounds=bounds,
    )
    ds = load_dataset(tmp_path)
    assert ds.expr_dim == 2
    assert ds.background == (0.2, 0.3, 0.4)
    np.testing.assert_array_equal(ds.init_bounds, bounds)
    assert len(ds.train) == 2 and len(ds.test) == 1
    assert [f.index for f in ds.train] == [0, 2]

    for loaded, orig in zip([ds.train[0], ds.test[0], ds.train[1]], frames):
        np.testing.assert_array_equal(loaded.expr, orig.expr)
        np.testing.assert_allclose(
            loaded.camera.world_to_cam, orig.camera.world_to_cam, atol=1e-12
        )
        assert (loaded.camera.width, loaded.camera.fx) == (
            orig.camera.width, orig.camera.fx,
        )
        # images went through 8-bit PNG, so half a quantization step at most
        assert loaded.image.dtype == np.float32
        np.testing.assert_allclose(loaded.image, orig.image, atol=0.5 / 255 + 1e-6)


def test_frames_property_concatenates_splits(tmp_path):
    write_dataset(tmp_path, make_frames(), expr_dim=2, train_idx=[0, 1], test_idx=[2])
    ds = load_dataset(tmp_path)
    assert [f.index for f in ds.frames] == [0, 1, 2]


def test_defaults_put_all_frames_in_train(tmp_path):
    write_dataset(tmp_path, make_frames(), expr_dim=2)
    ds = load_dataset(tmp_path)
    assert len(ds.train) == 3 and ds.test == []
    assert ds.background == (1.0, 1.0, 1.0)
    assert ds.init_bounds is None


def test_missing_manifest(tmp_path):
    with pytest.raises(LoadError, match="manifest.json"):
        load_dataset(tmp_path)


def test_manifest_not_json(tmp_path):
    (tmp_path / MANIFEST_NAME).write_text("{nope")
    with pytest.raises(FormatError, match="not valid JSON"):
        load_dataset(tmp_path)


def written_manifest(tmp_path):
    write_dataset(tmp_path, make_frames(), expr_dim=2)
    return json.loads((tmp_path / MANIFEST_NAME).read_text())


def rewrite(tmp_path, manifest):
    (tmp_path / MANIFEST_NAME).write_text(json.dumps(manifest))


def test_unknown_version_rejected(tmp_path):
    m = written_manifest(tmp_path)
    m["version"] = 2
    rewrite(tmp_path, m)
    with pytest.raises(FormatError, match="version 2"):
        load_dataset(tmp_path)


def test_empty_frame_list_rejected(tmp_path):
    m = written_manifest(tmp_path)
    m["frames"] = []
    rewrite(tmp_path, m)
    with pytest.raises(FormatError, match="no frames"):
        load_dataset(tmp_path)


def test_missing_expr_dim_rejected(tmp_path):
    m = written_manifest(tmp_path)
    del m["expr_dim"]
    rewrite(tmp_path, m)
    with pytest.raises(FormatError, match="expr_dim"):
        load_dataset(tmp_path)


def test_wrong_expression_width_names_the_frame(tmp_path):
    m = written_manifest(tmp_path)
    m["frames"][1]["expr"] = [0.5]
    rewrite(tmp_path, m)
    with pytest.raises(FormatError, match="frame 1: expression has 1 weights, expected 2"):
        load_dataset(tmp_path)


def test_bad_world_to_cam_names_the_frame(tmp_path):
    m = written_manifest(tmp_path)
    m["frames"][2]["world_to_cam"] = [1.0, 0.0, 0.0]
    rewrite(tmp_path, m)
    with pytest.raises(FormatError, match="frame 2: world_to_cam must be 16 floats row-major, got 3"):
        load_dataset(tmp_path)


def test_non_list_world_to_cam_reports_the_value(tmp_path):
    m = written_manifest(tmp_path)
    m["frames"][0]["world_to_cam"] = "identity"
    rewrite(tmp_path, m)
    with pytest.raises(FormatError, match="got identity"):
        load_dataset(tmp_path)


def test_missing_camera_field_named(tmp_path):
    m = written_manifest(tmp_path)
    del m["frames"][0]["cx"]
    rewrite(tmp_path, m)
    with pytest.raises(FormatError, match="frame 0: missing camera field 'cx'"):
        load_dataset(tmp_path)


def test_missing_image_file(tmp_path):
    m = written_manifest(tmp_path)
    Path(tmp_path, m["frames"][1]["image_path"]).unlink()
    rewrite(tmp_path, m)
    with pytest.raises(LoadError, match="image not found"):
        load_dataset(tmp_path)


def test_image_size_must_match_manifest(tmp_path):
    m = written_manifest(tmp_path)
    m["frames"][0]["width"] = 8
    m["frames"][0]["cx"] = 4.0
    rewrite(tmp_path, m)
    with pytest.raises(FormatError, match="frame 0: .* manifest says 8x16"):
        load_dataset(tmp_path)


def test_split_index_out_of_range(tmp_path):
    m = written_manifest(tmp_path)
    m["test"] = [7]
    rewrite(tmp_path, m)
    with pytest.raises(FormatError, match="test split references a frame outside 0..2"):
        load_dataset(tmp_path)


def test_empty_train_split_rejected(tmp_path):
    m = written_manifest(tmp_path)
    m["train"] = []
    rewrite(tmp_path, m)
    with pytest.raises(FormatError, match="train split is empty"):
        load_dataset(tmp_path)


def test_bad_background_rejected(tmp_path):
    m = written_manifest(tmp_path)
    m["background"] = [1.0, 0.5]
    rewrite(tmp_path, m)
    with pytest.raises(FormatError, match="RGB triple"):
        load_dataset(tmp_path)


def test_bad_init_bounds_rejected(tmp_path):
    m = written_manifest(tmp_path)
    m["init_bounds"] = [[0.0, 0.0], [1.0, 1.0]]
    rewrite(tmp_path, m)
    with pytest.raises(FormatError, match=r"init_bounds must be a \(2, 3\) AABB"):
        load_dataset(tmp_path)
