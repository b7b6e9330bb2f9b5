import pytest

from volsearch import (
    LabelMap,
    SliceLabelTable,
    UnknownLabelError,
    coarsen,
    load_label_map,
    load_slice_labels,
    save_label_map,
    save_slice_labels,
    totalsegmentator_map,
)


@pytest.fixture
def small_map():
    return LabelMap.from_pairs(
        [
            ("rib_left_1", "rib"),
            ("rib_left_2", "rib"),
            ("liver", "liver"),
            ("kidney_left", "kidney"),
            ("kidney_right", "kidney"),
        ]
    )


def test_coarse_ids_are_alphabetical(small_map):
    # coarse names: kidney, liver, rib -> ids 0, 1, 2
    assert small_map.coarse_name(0) == "kidney"
    assert small_map.coarse_name(1) == "liver"
    assert small_map.coarse_name(2) == "rib"
    assert small_map.coarse_id(0) == 2  # rib_left_1
    assert small_map.coarse_id(2) == 1  # liver


def test_fine_id_accepts_spaces_or_underscores(small_map):
    assert small_map.fine_id("rib_left_1") == 0
    assert small_map.fine_id("rib left 1") == 0
    with pytest.raises(UnknownLabelError):
        small_map.fine_id("spleen")


def test_coarsen_drops_duplicates(small_map):
    assert coarsen([0, 1], small_map) == frozenset({2})
    assert coarsen([0, 2, 3], small_map) == frozenset({2, 1, 0})
    assert coarsen([], small_map) == frozenset()


def test_coarsen_unknown_label(small_map):
    with pytest.raises(UnknownLabelError):
        coarsen([99], small_map)


def test_identity_map():
    m = LabelMap.identity(["a", "b"])
    assert m.n_fine == m.n_coarse == 2
    assert coarsen([1], m) == frozenset({1})


def test_label_map_tsv_round_trip(tmp_path, small_map):
    path = tmp_path / "map.tsv"
    save_label_map(small_map, path)
    again = load_label_map(path)
    assert again == small_map


def test_packaged_map_has_104_fine_29_coarse():
    m = totalsegmentator_map()
    assert m.n_fine == 104
    assert m.n_coarse == 29


def test_packaged_map_group_sizes():
    m = totalsegmentator_map()
    sizes: dict[str, int] = {}
    for fine_id in range(m.n_fine):
        name = m.coarse_name(m.coarse_id(fine_id))
        sizes[name] = sizes.get(name, 0) + 1
    assert sizes["rib"] == 24
    assert sizes["vertebrae"] == 24
    assert sizes["cardiovascular system"] == 12
    assert sizes["gluteus muscles"] == 6
    assert sizes["lung"] == 5
    assert sizes["liver"] == 1


def test_packaged_map_spot_checks():
    m = totalsegmentator_map()
    assert m.coarse_name(m.coarse_id(m.fine_id("liver"))) == "liver"
    assert m.coarse_name(m.coarse_id(m.fine_id("rib_right_12"))) == "rib"
    assert m.coarse_name(m.coarse_id(m.fine_id("vertebrae_C1"))) == "vertebrae"
    assert m.coarse_name(m.coarse_id(m.fine_id("aorta"))) == "cardiovascular system"
    assert m.coarse_name(m.coarse_id(m.fine_id("gluteus_maximus_left"))) == "gluteus muscles"


def test_slice_label_table_lookup():
    t = SliceLabelTable({("v1", 0): [3, 1], ("v1", 1): [], ("v2", 0): [2]})
    assert t.labels("v1", 0) == frozenset({1, 3})
    assert t.labels("v1", 1) == frozenset()
    assert t.labels("v1", 99) == frozenset()
    assert t.volume_labels("v1") == frozenset({1, 3})
    assert "v2" in t and "v3" not in t
    assert len(t) == 3


def test_slice_label_csv_round_trip(tmp_path):
    t = SliceLabelTable({("v1", 0): [3, 1], ("v1", 1): [], ("v2", 5): [0]})
    path = tmp_path / "labels.csv"
    save_slice_labels(t, path)
    text = path.read_text()
    assert text.splitlines()[0] == "volume_id,slice_index,fine_label_ids"
    assert "v1,0,1;3" in text
    assert "v1,1," in text
    again = load_slice_labels(path)
    assert list(again.items()) == list(t.items())


def test_slice_label_csv_empty_label_field(tmp_path):
    path = tmp_path / "labels.csv"
    path.write_text("volume_id,slice_index,fine_label_ids\nv,0,\nv,1,2;7\n")
    t = load_slice_labels(path)
    assert t.labels("v", 0) == frozenset()
    assert t.labels("v", 1) == frozenset({2, 7})
