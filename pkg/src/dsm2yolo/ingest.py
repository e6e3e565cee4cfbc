"""COCO-style annotation loading and DSM alignment checks."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path, PurePath
from typing import Dict, List, Optional, Tuple

from .errors import (DanglingReference, DegeneratePolygon, Dsm2YoloError, MalformedDocument,
                     UnsupportedSegmentation)
from .geometry import Polygon
from .raster import find_raster, read_raster_shape


@dataclass(frozen=True)
class ImageRecord:
    id: int
    file_name: str
    width: int
    height: int

    @property
    def stem(self) -> str:
        return PurePath(self.file_name).stem


@dataclass(frozen=True)
class AnnotationRecord:
    id: int
    image_id: int
    parts: Tuple[Polygon, ...]
    source_category: Optional[int] = None


@dataclass(frozen=True)
class DatasetIndex:
    images: Tuple[ImageRecord, ...]
    annotations: Tuple[AnnotationRecord, ...]
    _by_image: Dict[int, Tuple[AnnotationRecord, ...]] = field(
        default=None, init=False, repr=False, compare=False)
    _images_by_id: Dict[int, ImageRecord] = field(
        default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        images_by_id = {im.id: im for im in self.images}
        grouped: Dict[int, List[AnnotationRecord]] = {im.id: [] for im in self.images}
        for ann in self.annotations:
            grouped[ann.image_id].append(ann)
        object.__setattr__(self, "_images_by_id", images_by_id)
        object.__setattr__(self, "_by_image", {k: tuple(v) for k, v in grouped.items()})

    def image(self, image_id: int) -> ImageRecord:
        return self._images_by_id[image_id]

    def annotations_for(self, image_id: int) -> Tuple[AnnotationRecord, ...]:
        return self._by_image.get(image_id, ())

    @property
    def part_count(self) -> int:
        return sum(len(a.parts) for a in self.annotations)

    def to_coco(self) -> dict:
        """Serialize back to the COCO subset this module reads."""
        return {
            "images": [{"id": im.id, "file_name": im.file_name, "width": im.width,
                        "height": im.height} for im in self.images],
            "annotations": [{
                "id": a.id, "image_id": a.image_id, "category_id": a.source_category,
                "segmentation": [[c for xy in part for c in xy] for part in a.parts],
            } for a in self.annotations],
        }


def _int_field(obj, key, where):
    try:
        val = obj[key]
    except (KeyError, TypeError):
        raise MalformedDocument(f"{where}: missing {key!r}")
    if isinstance(val, bool) or not isinstance(val, int):
        if isinstance(val, float) and val.is_integer():
            return int(val)
        raise MalformedDocument(f"{where}: {key!r} must be an integer, got {val!r}")
    return val


def _parse_image(obj, i) -> ImageRecord:
    where = f"images[{i}]"
    if not isinstance(obj, dict):
        raise MalformedDocument(f"{where}: expected an object")
    file_name = obj.get("file_name")
    if not isinstance(file_name, str) or not file_name:
        raise MalformedDocument(f"{where}: missing or empty file_name")
    width, height = _int_field(obj, "width", where), _int_field(obj, "height", where)
    if width <= 0 or height <= 0:
        raise MalformedDocument(f"{where}: dimensions must be positive, got {width}x{height}")
    return ImageRecord(_int_field(obj, "id", where), file_name, width, height)


def _parse_parts(seg, where) -> Tuple[Polygon, ...]:
    if isinstance(seg, dict):
        raise UnsupportedSegmentation(f"{where}: run-length encoded segmentation is not supported")
    if not isinstance(seg, list):
        raise MalformedDocument(f"{where}: segmentation must be a list of polygons")
    if not seg:
        raise DegeneratePolygon(f"{where}: segmentation has no polygons")
    parts = []
    for k, flat in enumerate(seg):
        if isinstance(flat, dict):
            raise UnsupportedSegmentation(f"{where}: run-length encoded segmentation is not supported")
        if not isinstance(flat, list) or not all(
                isinstance(c, (int, float)) and not isinstance(c, bool) for c in flat):
            raise MalformedDocument(f"{where}: part {k} is not a flat list of numbers")
        if len(flat) % 2:
            raise MalformedDocument(f"{where}: part {k} has an odd number of coordinates ({len(flat)})")
        if not all(math.isfinite(c) for c in flat):
            raise MalformedDocument(f"{where}: part {k} has non-finite coordinates")
        if len(flat) < 6:
            raise DegeneratePolygon(f"{where}: part {k} has {len(flat) // 2} vertices, need at least 3")
        parts.append(tuple((float(flat[j]), float(flat[j + 1])) for j in range(0, len(flat), 2)))
    return tuple(parts)


def parse_dataset(doc) -> DatasetIndex:
    if not isinstance(doc, dict):
        raise MalformedDocument("top level must be an object")
    raw_images, raw_anns = doc.get("images"), doc.get("annotations")
    if not isinstance(raw_images, list) or not isinstance(raw_anns, list):
        raise MalformedDocument("document needs 'images' and 'annotations' lists")

    images = tuple(_parse_image(obj, i) for i, obj in enumerate(raw_images))
    ids = [im.id for im in images]
    if len(set(ids)) != len(ids):
        raise MalformedDocument("duplicate image ids")
    known = set(ids)

    anns = []
    for i, obj in enumerate(raw_anns):
        where = f"annotations[{i}]"
        if not isinstance(obj, dict):
            raise MalformedDocument(f"{where}: expected an object")
        image_id = _int_field(obj, "image_id", where)
        if image_id not in known:
            raise DanglingReference(f"{where}: image_id {image_id} is not in images")
        if "segmentation" not in obj:
            raise MalformedDocument(f"{where}: missing 'segmentation'")
        cat = obj.get("category_id")
        anns.append(AnnotationRecord(
            id=_int_field(obj, "id", where),
            image_id=image_id,
            parts=_parse_parts(obj["segmentation"], where),
            source_category=cat if isinstance(cat, int) and not isinstance(cat, bool) else None,
        ))
    return DatasetIndex(images, tuple(anns))


def load_dataset(path) -> DatasetIndex:
    try:
        with open(path, "rb") as fh:
            doc = json.load(fh)
    except (OSError, ValueError) as exc:
        raise MalformedDocument(f"{path}: {exc}") from exc
    try:
        return parse_dataset(doc)
    except Dsm2YoloError as exc:
        raise type(exc)(f"{path}: {exc}") from None


def save_dataset(index: DatasetIndex, path) -> None:
    Path(path).write_text(json.dumps(index.to_coco(), indent=1))


ALIGNED = "aligned"
MISSING = "missing"
MISMATCH = "dimension mismatch"
UNREADABLE = "unreadable"


@dataclass(frozen=True)
class AlignmentEntry:
    stem: str
    status: str
    raster_path: Optional[str] = None
    raster_size: Optional[Tuple[int, int]] = None
    image_size: Tuple[int, int] = (0, 0)
    out_of_bounds: Tuple[int, ...] = ()
    detail: str = ""


@dataclass(frozen=True)
class ValidationReport:
    entries: Tuple[AlignmentEntry, ...]

    def count(self, status: str) -> int:
        return sum(e.status == status for e in self.entries)

    @property
    def ok(self) -> bool:
        return all(e.status == ALIGNED for e in self.entries)

    def problems(self) -> List[AlignmentEntry]:
        return [e for e in self.entries if e.status != ALIGNED]

    def to_text(self) -> str:
        lines = [f"aligned: {self.count(ALIGNED)}", f"missing: {self.count(MISSING)}",
                 f"dimension mismatch: {self.count(MISMATCH)}",
                 f"unreadable: {self.count(UNREADABLE)}"]
        for e in self.entries:
            if e.status != ALIGNED:
                lines.append(f"  {e.stem}: {e.status} {e.detail}".rstrip())
            if e.out_of_bounds:
                ids = ",".join(str(i) for i in e.out_of_bounds)
                lines.append(f"  {e.stem}: vertices outside image in annotations {ids}")
        return "\n".join(lines)


def _out_of_bounds(index: DatasetIndex, im: ImageRecord) -> Tuple[int, ...]:
    bad = []
    for ann in index.annotations_for(im.id):
        if any(not (0 <= x <= im.width and 0 <= y <= im.height)
               for part in ann.parts for x, y in part):
            bad.append(ann.id)
    return tuple(bad)


def validate_alignment(index: DatasetIndex, raster_dir) -> ValidationReport:
    entries = []
    for im in index.images:
        oob = _out_of_bounds(index, im)
        size = (im.width, im.height)
        path = find_raster(raster_dir, im.stem)
        if path is None:
            entries.append(AlignmentEntry(im.stem, MISSING, image_size=size, out_of_bounds=oob,
                                          detail=f"no raster named {im.stem}.* in {raster_dir}"))
            continue
        try:
            rsize = read_raster_shape(path)
        except (Dsm2YoloError, OSError) as exc:
            entries.append(AlignmentEntry(im.stem, UNREADABLE, str(path), image_size=size,
                                          out_of_bounds=oob, detail=str(exc)))
            continue
        status = ALIGNED if tuple(rsize) == size else MISMATCH
        detail = "" if status == ALIGNED else f"raster {rsize[0]}x{rsize[1]} vs image {size[0]}x{size[1]}"
        entries.append(AlignmentEntry(im.stem, status, str(path), tuple(rsize), size, oob, detail))
    return ValidationReport(tuple(entries))
