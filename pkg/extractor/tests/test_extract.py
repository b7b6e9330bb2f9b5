"""Extraction pipeline: preprocessing, slice ordering, store assembly,
mask-derived labels, determinism, and the command line."""
import numpy as np
import pytest

from volsearch import load_slice_labels, read_store

from volextract import (
    ExtractorConfig,
    UnreadableVolume,
    VolextractError,
    axial_slices,
    extract,
    extract_file,
    extract_to_store,
    mask_labels,
    preprocess,
    volume_id_for,
    write_nifti,
)
from volextract.cli import main as cli_main

from conftest import CHEAP_MODEL


# --- configuration -------------------------------------------------------


def test_default_config_is_valid():
    config = ExtractorConfig()
    assert config.model == "dinov2"
    assert config.interp == "bilinear"
    assert config.axial_axis == 2


@pytest.mark.parametrize(
    "kwargs",
    [
        {"batch_size": 0},
        {"batch_size": -4},
        {"axial_axis": 3},
        {"axial_axis": -1},
        {"interp": "lanczos"},
    ],
)
def test_invalid_config_rejected(kwargs):
    with pytest.raises(VolextractError):
        ExtractorConfig(**kwargs)


@pytest.mark.parametrize(
    "path,expected",
    [
        ("data/ct/case_017.nii.gz", "case_017"),
        ("case_017.nii", "case_017"),
        ("case_017", "case_017"),
    ],
)
def test_volume_id_from_path(path, expected):
    assert volume_id_for(path) == expected


# --- slicing and preprocessing -------------------------------------------


def test_axial_slices_move_requested_axis_first(rng):
    volume = rng.normal(size=(4, 5, 6))
    assert axial_slices(volume, 2).shape == (6, 4, 5)
    assert axial_slices(volume, 1).shape == (5, 4, 6)
    assert axial_slices(volume, 0).shape == (4, 5, 6)
    np.testing.assert_array_equal(axial_slices(volume, 2)[1], volume[:, :, 1])


def test_axial_slices_need_3d(rng):
    with pytest.raises(UnreadableVolume):
        axial_slices(rng.normal(size=(4, 5)))


def test_preprocess_shape_and_channel_replication(model, rng):
    slices = rng.normal(size=(3, 20, 24)).astype(np.float32)
    x = preprocess(slices, model)
    assert x.shape == (3, 3, 224, 224)
    # undo the normalization; the three channels must be the same plane
    mean = np.array(model.mean).reshape(1, 3, 1, 1)
    std = np.array(model.std).reshape(1, 3, 1, 1)
    raw = x.numpy() * std + mean
    np.testing.assert_allclose(raw[:, 0], raw[:, 1], atol=1e-6)
    np.testing.assert_allclose(raw[:, 0], raw[:, 2], atol=1e-6)
    # bilinear resize of a [0, 1] rescale stays inside [0, 1]
    assert raw.min() >= -1e-6 and raw.max() <= 1.0 + 1e-6


def test_preprocess_rescales_with_volume_extrema(model):
    slices = np.stack(
        [np.full((224, 224), -1000.0), np.full((224, 224), 3000.0)]
    ).astype(np.float32)
    x = preprocess(slices, model)
    mean = np.array(model.mean).reshape(1, 3, 1, 1)
    std = np.array(model.std).reshape(1, 3, 1, 1)
    raw = x.numpy() * std + mean
    np.testing.assert_allclose(raw[0], 0.0, atol=1e-6)
    np.testing.assert_allclose(raw[1], 1.0, atol=1e-6)


def test_preprocess_constant_volume_maps_to_zero(model):
    slices = np.full((2, 30, 30), 500.0, dtype=np.float32)
    x = preprocess(slices, model)
    mean = np.array(model.mean).reshape(1, 3, 1, 1)
    std = np.array(model.std).reshape(1, 3, 1, 1)
    raw = x.numpy() * std + mean
    np.testing.assert_allclose(raw, 0.0, atol=1e-6)


def test_preprocess_nearest_mode(model, rng):
    slices = rng.normal(size=(2, 50, 40)).astype(np.float32)
    x = preprocess(slices, model, interp="nearest")
    assert x.shape == (2, 3, 224, 224)


# --- slice extraction -----------------------------------------------------


def test_extract_orders_rows_by_slice(model, config, rng):
    volume = rng.normal(size=(20, 24, 5)).astype(np.float32)
    rows = extract(volume, model, config, "case")
    assert [(r.volume_id, r.slice_index) for r in rows] == [
        ("case", i) for i in range(5)
    ]
    for row in rows:
        assert row.vector.dtype == np.float32
        assert abs(float(np.linalg.norm(row.vector)) - 1.0) < 1e-5


def test_extract_batching_does_not_change_rows(model, rng):
    volume = rng.normal(size=(20, 24, 5)).astype(np.float32)
    small = ExtractorConfig(model=CHEAP_MODEL, pretrained=False, batch_size=2)
    large = ExtractorConfig(model=CHEAP_MODEL, pretrained=False, batch_size=16)
    a = np.stack([r.vector for r in extract(volume, model, small)])
    b = np.stack([r.vector for r in extract(volume, model, large)])
    np.testing.assert_allclose(a, b, atol=1e-4)


def test_extract_respects_axis_flag(model, rng):
    volume = rng.normal(size=(20, 24, 5)).astype(np.float32)
    flipped = np.moveaxis(volume, 2, 0)
    axis2 = ExtractorConfig(model=CHEAP_MODEL, pretrained=False, axial_axis=2)
    axis0 = ExtractorConfig(model=CHEAP_MODEL, pretrained=False, axial_axis=0)
    a = np.stack([r.vector for r in extract(volume, model, axis2)])
    b = np.stack([r.vector for r in extract(flipped, model, axis0)])
    np.testing.assert_array_equal(a, b)


def test_extract_file_uses_filename_as_volume_id(model, config, volume_files):
    path, n_slices = volume_files[0]
    rows = extract_file(path, model, config)
    assert len(rows) == n_slices
    assert rows[0].volume_id == "vol_a"


# --- mask labels ----------------------------------------------------------


def test_mask_labels_collect_nonzero_values_per_slice():
    mask = np.zeros((4, 4, 3), dtype=np.int16)
    mask[0, 0, 0] = 7
    mask[1:3, 1:3, 2] = 7
    mask[3, 3, 2] = 12
    rows = mask_labels(mask, "case")
    assert rows[("case", 0)] == [7]
    assert rows[("case", 1)] == []
    assert rows[("case", 2)] == [7, 12]


# --- whole-store extraction -----------------------------------------------


def test_extract_to_store_round_trips_on_disk(config, volume_files, tmp_path):
    paths = [p for p, _ in volume_files]
    out = tmp_path / "db.vge1"
    store = extract_to_store(paths, config, out_path=out)
    loaded = read_store(out)
    assert loaded.dim == store.dim
    assert loaded.volume_ids() == ["vol_a", "vol_b", "vol_c"]
    np.testing.assert_array_equal(loaded.matrix, store.matrix)
    for path, n_slices in volume_files:
        assert loaded.volume(volume_id_for(path)).n_slices == n_slices


def test_extract_to_store_split_flag(config, volume_files):
    paths = [p for p, _ in volume_files[:1]]
    query_config = ExtractorConfig(
        model=CHEAP_MODEL, pretrained=False, seed=1, split="query"
    )
    assert extract_to_store(paths, query_config).volume("vol_a").split == "query"
    assert extract_to_store(paths, config).volume("vol_a").split == "database"


def test_extract_to_store_writes_mask_labels(config, volume_files, tmp_path):
    paths = [p for p, _ in volume_files]
    mask_paths = []
    for path, n_slices in volume_files:
        mask = np.zeros((20, 24, n_slices), dtype=np.int16)
        mask[5:10, 5:10, 0] = 3
        mask[0, 0, n_slices - 1] = 9
        mask_path = tmp_path / f"mask_{path.name}"
        write_nifti(mask, mask_path)
        mask_paths.append(mask_path)
    labels_csv = tmp_path / "labels.csv"
    extract_to_store(paths, config, mask_paths=mask_paths, labels_out=labels_csv)
    table = load_slice_labels(labels_csv)
    for path, n_slices in volume_files:
        vid = volume_id_for(path)
        assert table.labels(vid, 0) == frozenset({3})
        assert table.labels(vid, 1) == frozenset()
        assert table.labels(vid, n_slices - 1) == frozenset({9})


def test_extract_to_store_rejects_bad_inputs(config, volume_files, tmp_path):
    paths = [p for p, _ in volume_files]
    with pytest.raises(VolextractError):
        extract_to_store([], config)
    with pytest.raises(VolextractError):
        extract_to_store(paths, config, mask_paths=paths[:1])
    # a mask on a different grid than its volume
    bad_mask = tmp_path / "bad_mask.nii.gz"
    write_nifti(np.zeros((7, 7, 2), dtype=np.int16), bad_mask)
    with pytest.raises(UnreadableVolume):
        extract_to_store(paths[:1], config, mask_paths=[bad_mask])


def test_extract_to_store_is_deterministic(config, volume_files, tmp_path):
    paths = [p for p, _ in volume_files]
    first = tmp_path / "first.vge1"
    second = tmp_path / "second.vge1"
    extract_to_store(paths, config, out_path=first)
    extract_to_store(paths, config, out_path=second)
    assert first.read_bytes() == second.read_bytes()


# --- command line ---------------------------------------------------------


def test_cli_extracts_store(volume_files, tmp_path, capsys):
    paths = [str(p) for p, _ in volume_files]
    out = tmp_path / "cli.vge1"
    code = cli_main(
        paths
        + ["--model", CHEAP_MODEL, "--random-init", "--seed", "1",
           "--batch", "4", "--out", str(out)]
    )
    assert code == 0
    total = sum(n for _, n in volume_files)
    assert f"wrote {total} rows" in capsys.readouterr().out
    assert read_store(out).row_count == total


def test_cli_labels_need_masks(volume_files, tmp_path):
    paths = [str(p) for p, _ in volume_files]
    code = cli_main(
        paths
        + ["--model", CHEAP_MODEL, "--random-init",
           "--out", str(tmp_path / "x.vge1"),
           "--labels-out", str(tmp_path / "labels.csv")]
    )
    assert code == 2


def test_cli_missing_volume_fails(tmp_path):
    code = cli_main(
        [str(tmp_path / "nope.nii.gz"), "--model", CHEAP_MODEL,
         "--random-init", "--out", str(tmp_path / "x.vge1")]
    )
    assert code == 2


def test_cli_unknown_model_rejected(tmp_path, capsys):
    with pytest.raises(SystemExit):
        cli_main(["vol.nii", "--model", "clip", "--out", str(tmp_path / "x.vge1")])
