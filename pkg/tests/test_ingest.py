import json
import shutil

import pytest

from dsm2yolo.errors import (DanglingReference, DegeneratePolygon, MalformedDocument,
                             UnsupportedSegmentation)
from dsm2yolo.ingest import (ALIGNED, MISMATCH, MISSING, load_dataset, parse_dataset, save_dataset,
                             validate_alignment)


def doc(segmentation=None, image_id=1, **image):
    im = {"id": 1, "file_name": "t.png", "width": 512, "height": 512}
    im.update(image)
    seg = [[10, 10, 50, 10, 30, 40]] if segmentation is None else segmentation
    return {"images": [im],
            "annotations": [{"id": 1, "image_id": image_id, "category_id": 3, "segmentation": seg}]}


def test_minimal_document():
    idx = parse_dataset(doc())
    assert len(idx.images) == 1 and len(idx.annotations) == 1
    assert idx.part_count == 1
    assert idx.annotations[0].parts[0] == ((10, 10), (50, 10), (30, 40))
    assert idx.annotations[0].source_category == 3


def test_dangling_reference():
    with pytest.raises(DanglingReference):
        parse_dataset(doc(image_id=99))


def test_rle_rejected():
    with pytest.raises(UnsupportedSegmentation):
        parse_dataset(doc(segmentation={"size": [4, 4], "counts": "abc"}))


def test_odd_vertex_list_rejected():
    with pytest.raises(MalformedDocument):
        parse_dataset(doc(segmentation=[[1, 2, 3, 4, 5, 6, 7]]))


def test_two_vertices_degenerate():
    with pytest.raises(DegeneratePolygon):
        parse_dataset(doc(segmentation=[[1, 2, 3, 4]]))


def test_nonpositive_size():
    with pytest.raises(MalformedDocument):
        parse_dataset(doc(width=0))


def test_missing_collections():
    with pytest.raises(MalformedDocument):
        parse_dataset({"images": []})


def test_unparseable_file(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(MalformedDocument):
        load_dataset(p)


def test_fixture_counts(mini_coco):
    idx = load_dataset(mini_coco)
    assert len(idx.images) == 4
    assert len(idx.annotations) == 9
    assert idx.part_count == 10


def test_deterministic_and_round_trip(mini_coco, tmp_path):
    a = load_dataset(mini_coco)
    assert load_dataset(mini_coco) == a
    out = tmp_path / "again.json"
    save_dataset(a, out)
    assert load_dataset(out) == a


def test_every_annotation_satisfies_invariants(mini_coco):
    idx = load_dataset(mini_coco)
    ids = {im.id for im in idx.images}
    for ann in idx.annotations:
        assert ann.image_id in ids
        assert ann.parts and all(len(p) >= 3 for p in ann.parts)


class TestAlignment:
    def test_all_aligned(self, mini_coco, dsm_dir):
        rep = validate_alignment(load_dataset(mini_coco), dsm_dir)
        assert rep.ok and rep.count(ALIGNED) == 4

    def test_three_of_four_present(self, mini_coco, dsm_dir, tmp_path):
        d = tmp_path / "dsm"
        shutil.copytree(dsm_dir, d)
        (d / "tile_c.asc").unlink()
        rep = validate_alignment(load_dataset(mini_coco), d)
        assert rep.count(ALIGNED) == 3
        assert rep.count(MISSING) == 1
        assert not rep.ok

    def test_dimension_mismatch(self, tmp_path):
        p = tmp_path / "a.json"
        p.write_text(json.dumps(doc(file_name="t.png")))
        (tmp_path / "r").mkdir()
        (tmp_path / "r" / "t.asc").write_text("ncols 256\nnrows 256\n" + "0 " * 65536)
        rep = validate_alignment(load_dataset(p), tmp_path / "r")
        assert rep.entries[0].status == MISMATCH

    def test_matching_size_aligned(self, tmp_path):
        p = tmp_path / "a.json"
        p.write_text(json.dumps(doc(width=4, height=2, segmentation=[[0, 0, 4, 0, 4, 2]])))
        (tmp_path / "r").mkdir()
        (tmp_path / "r" / "t.asc").write_text("ncols 4\nnrows 2\n" + "0 " * 8)
        assert validate_alignment(load_dataset(p), tmp_path / "r").entries[0].status == ALIGNED

    def test_out_of_bounds_flagged(self, tmp_path):
        p = tmp_path / "a.json"
        p.write_text(json.dumps(doc(width=4, height=2, segmentation=[[0, 0, 5, 0, 4, 2]])))
        (tmp_path / "r").mkdir()
        (tmp_path / "r" / "t.asc").write_text("ncols 4\nnrows 2\n" + "0 " * 8)
        rep = validate_alignment(load_dataset(p), tmp_path / "r")
        assert rep.entries[0].out_of_bounds == (1,)
        assert "outside" in rep.to_text()
