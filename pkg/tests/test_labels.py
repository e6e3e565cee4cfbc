import filecmp
import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dsm2yolo import load_dataset
from dsm2yolo.errors import (Dsm2YoloError, MixedKinds, OutOfRangeClass, OutOfRangeCoordinate,
                             TokenCountMismatch)
from dsm2yolo.heightclass import estimate_instance
from dsm2yolo.ingest import parse_dataset
from dsm2yolo.labels import (GROUND_TRUTH, PREDICTION, SplitSpec, YoloInstance, convert_dataset,
                             fnv1a_64, largest_part, parse_label_file, parse_label_line,
                             write_label_file)
from dsm2yolo.raster import find_raster, read_raster

coord = st.integers(0, 1_000_000).map(lambda k: k / 1_000_000)
vertex = st.tuples(coord, coord)
gt_inst = st.builds(YoloInstance, st.integers(0, 4), st.lists(vertex, min_size=3, max_size=10).map(tuple))
pred_inst = st.builds(YoloInstance, st.integers(0, 4), st.lists(vertex, min_size=3, max_size=10).map(tuple),
                      coord)


def test_gt_line_format(tmp_path):
    inst = YoloInstance(1, ((0.1, 0.1), (0.5, 0.1), (0.5, 0.9)))
    write_label_file([inst], tmp_path / "a.txt")
    assert (tmp_path / "a.txt").read_bytes() == b"1 0.100000 0.100000 0.500000 0.100000 0.500000 0.900000\n"


def test_prediction_line_format(tmp_path):
    inst = YoloInstance(1, ((0.1, 0.1), (0.5, 0.1), (0.5, 0.9)), 0.87)
    write_label_file([inst], tmp_path / "a.txt")
    assert (tmp_path / "a.txt").read_text() == \
        "1 0.100000 0.100000 0.500000 0.100000 0.500000 0.900000 0.870000\n"


def test_empty_file(tmp_path):
    write_label_file([], tmp_path / "e.txt")
    assert (tmp_path / "e.txt").stat().st_size == 0
    assert parse_label_file(tmp_path / "e.txt") == []


def test_mixed_kinds(tmp_path):
    a = YoloInstance(0, ((0, 0), (1, 0), (1, 1)))
    b = YoloInstance(0, ((0, 0), (1, 0), (1, 1)), 0.5)
    with pytest.raises(MixedKinds):
        write_label_file([a, b], tmp_path / "m.txt")
    assert not (tmp_path / "m.txt").exists()


def test_no_temp_files_left(tmp_path):
    write_label_file([YoloInstance(0, ((0, 0), (1, 0), (1, 1)))], tmp_path / "a.txt")
    assert [p.name for p in tmp_path.iterdir()] == ["a.txt"]


class TestParseErrors:
    def test_class_out_of_range(self):
        with pytest.raises(OutOfRangeClass):
            parse_label_line("7 0.1 0.1 0.2 0.2 0.3 0.1")

    def test_six_tokens(self):
        with pytest.raises(TokenCountMismatch):
            parse_label_line("1 0.1 0.1 0.2 0.2 0.3")

    def test_prediction_needs_confidence(self):
        with pytest.raises(TokenCountMismatch):
            parse_label_line("1 0.1 0.1 0.2 0.2 0.3 0.1", PREDICTION)

    def test_coordinate_out_of_range(self):
        with pytest.raises(OutOfRangeCoordinate):
            parse_label_line("1 0.1 1.2 0.2 0.2 0.3 0.1")

    def test_error_carries_file_context(self, tmp_path):
        p = tmp_path / "bad.txt"
        p.write_text("0 0.1 0.1 0.2 0.2 0.3 0.1\n9 0.1 0.1 0.2 0.2 0.3 0.1\n")
        with pytest.raises(OutOfRangeClass, match=r"bad\.txt:2"):
            parse_label_file(p)

    def test_prediction_kind(self):
        inst = parse_label_line("4 0 0 1 0 1 1 0.25", PREDICTION)
        assert inst.class_index == 4 and inst.confidence == 0.25


@settings(max_examples=50, deadline=None)
@given(st.lists(gt_inst, max_size=20), st.lists(pred_inst, max_size=20))
def test_round_trip_both_kinds(tmp_path_factory, gts, preds):
    d = tmp_path_factory.mktemp("rt")
    for insts, kind in ((gts, GROUND_TRUTH), (preds, PREDICTION)):
        write_label_file(insts, d / "a.txt")
        back = parse_label_file(d / "a.txt", kind)
        assert back == insts
        write_label_file(back, d / "b.txt")
        assert (d / "a.txt").read_bytes() == (d / "b.txt").read_bytes()


def test_fnv1a_reference_vectors():
    # published FNV-1a 64-bit test vectors
    assert fnv1a_64(b"") == 0xCBF29CE484222325
    assert fnv1a_64(b"a") == 0xAF63DC4C8601EC8C
    assert fnv1a_64(b"foobar") == 0x85944171F73967E8


class TestSplit:
    def test_rule(self):
        spec = SplitSpec()
        for stem in ("tile_a", "tile_b", "tile_n", "x"):
            assert spec.is_val(stem) == (fnv1a_64(f"{stem}0".encode()) % 100 < 20)

    def test_hundred_stems(self):
        stems = [f"img_{i:03d}" for i in range(100)]
        train, val = SplitSpec(seed=0).partition(stems)
        assert 10 <= len(val) <= 30
        assert len(train) + len(val) == 100
        assert SplitSpec(seed=0).partition(stems) == (train, val)

    def test_seed_changes_partition(self):
        stems = [f"img_{i:03d}" for i in range(100)]
        assert SplitSpec(seed=0).partition(stems) != SplitSpec(seed=1).partition(stems)

    def test_empty(self):
        assert SplitSpec().partition([]) == ([], [])

    def test_fraction_validated(self):
        with pytest.raises(ValueError):
            SplitSpec(val_fraction=1.0)


def test_largest_part_tie_goes_first():
    a = ((0, 0), (2, 0), (2, 2), (0, 2))
    b = ((5, 5), (7, 5), (7, 7), (5, 7))
    c = ((0, 0), (3, 0), (3, 3), (0, 3))
    assert largest_part([a, b]) == 0
    assert largest_part([a, c, b]) == 1


class TestConvert:
    def test_golden_files(self, converted, fixtures_dir):
        out, report = converted
        golden = fixtures_dir / "golden" / "labels"
        cmp = filecmp.dircmp(out / "labels", golden)
        assert not cmp.left_only and not cmp.right_only
        for sub in ("train", "val"):
            for f in (golden / sub).iterdir():
                assert (out / "labels" / sub / f.name).read_bytes() == f.read_bytes(), f.name
        assert report.written == 8
        assert len(report.skipped) == 1
        assert report.skipped[0].reason == "NoValidSamples"
        assert dict(report.histogram) == {1: 3, 2: 2, 3: 1, 4: 1, 5: 1}
        assert report.clamped == 1
        assert (report.train_images, report.val_images) == (3, 1)

    def test_histogram_equals_reparsed_lines(self, converted):
        out, report = converted
        counts = {}
        for p in (out / "labels").rglob("*.txt"):
            for inst in parse_label_file(p):
                counts[inst.height_class] = counts.get(inst.height_class, 0) + 1
        assert counts == dict(report.histogram)

    def test_line_class_matches_height_module(self, converted, mini_coco, dsm_dir):
        out, _ = converted
        index = load_dataset(mini_coco)
        for image in index.images:
            raster = read_raster(find_raster(dsm_dir, image.stem))
            expected = []
            for ann in index.annotations_for(image.id):
                try:
                    expected.append(estimate_instance(ann, raster, image)[0])
                except Dsm2YoloError:
                    pass
            written = list((out / "labels").rglob(f"{image.stem}.txt"))
            assert len(written) == 1
            assert [i.class_index + 1 for i in parse_label_file(written[0])] == expected

    def test_deterministic(self, tmp_path, mini_coco, dsm_dir):
        index = load_dataset(mini_coco)
        convert_dataset(index, dsm_dir, tmp_path / "a")
        convert_dataset(index, dsm_dir, tmp_path / "b")
        cmp = filecmp.dircmp(tmp_path / "a" / "labels", tmp_path / "b" / "labels")
        for sub in ("train", "val"):
            names = sorted(p.name for p in (tmp_path / "a" / "labels" / sub).iterdir())
            match, mismatch, errors = filecmp.cmpfiles(
                tmp_path / "a" / "labels" / sub, tmp_path / "b" / "labels" / sub, names, shallow=False)
            assert not mismatch and not errors
        assert not cmp.left_only and not cmp.right_only

    def test_no_annotations(self, tmp_path, dsm_dir, mini_coco):
        doc = json.loads(mini_coco.read_text())
        doc["annotations"] = []
        report = convert_dataset(parse_dataset(doc), dsm_dir, tmp_path)
        files = list((tmp_path / "labels").rglob("*.txt"))
        assert len(files) == 4
        assert all(f.stat().st_size == 0 for f in files)
        assert sum(report.histogram.values()) == 0 and report.written == 0

    def test_misaligned_is_fatal(self, tmp_path, mini_coco, copytree, dsm_dir):
        d = copytree(dsm_dir, "dsm")
        (d / "tile_a.asc").unlink()
        with pytest.raises(Dsm2YoloError):
            convert_dataset(load_dataset(mini_coco), d, tmp_path / "out")

    def test_nested_part_flagged(self, tmp_path):
        doc = {"images": [{"id": 1, "file_name": "h.png", "width": 16, "height": 16}],
               "annotations": [{"id": 1, "image_id": 1, "category_id": 1, "segmentation": [
                   [0, 0, 12, 0, 12, 12, 0, 12], [4, 4, 8, 4, 8, 8, 4, 8]]}]}
        (tmp_path / "d").mkdir()
        (tmp_path / "d" / "h.asc").write_text("ncols 16\nnrows 16\n" + "5 " * 256)
        report = convert_dataset(parse_dataset(doc), tmp_path / "d", tmp_path / "o")
        assert report.nested_parts == [("h", 1)]
        assert "nested part" in report.to_text()
