"""YOLO segmentation label files and the DSM-to-label conversion."""

from __future__ import annotations

import math
import os
import tempfile
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .errors import (Dsm2YoloError, EmptyMask, IoFailure, MixedKinds, NoValidSamples,
                     OutOfRangeClass, OutOfRangeCoordinate, TokenCountMismatch)
from .geometry import NormalizedPolygon, normalize, point_in_polygon, polygon_area
from .heightclass import CLASS_LABELS, NUM_CLASSES, estimate_instance
from .ingest import DatasetIndex, validate_alignment
from .raster import find_raster, read_raster

GROUND_TRUTH = "ground-truth"
PREDICTION = "prediction"

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


@dataclass(frozen=True)
class YoloInstance:
    class_index: int
    polygon: NormalizedPolygon
    confidence: Optional[float] = None

    def __post_init__(self):
        if not 0 <= self.class_index < NUM_CLASSES:
            raise OutOfRangeClass(f"class index {self.class_index} outside 0..{NUM_CLASSES - 1}")
        if len(self.polygon) < 3:
            raise TokenCountMismatch(f"polygon has {len(self.polygon)} vertices, need at least 3")
        for x, y in self.polygon:
            if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
                raise OutOfRangeCoordinate(f"vertex ({x}, {y}) outside [0, 1]")
        if self.confidence is not None and not 0.0 <= self.confidence <= 1.0:
            raise OutOfRangeCoordinate(f"confidence {self.confidence} outside [0, 1]")

    @property
    def height_class(self) -> int:
        return self.class_index + 1

    def to_line(self) -> str:
        tokens = [str(self.class_index)]
        tokens += [f"{c:.6f}" for xy in self.polygon for c in xy]
        if self.confidence is not None:
            tokens.append(f"{self.confidence:.6f}")
        return " ".join(tokens)


def format_labels(instances: Sequence[YoloInstance]) -> str:
    kinds = {inst.confidence is None for inst in instances}
    if len(kinds) > 1:
        raise MixedKinds("ground-truth and prediction instances mixed in one file")
    return "".join(inst.to_line() + "\n" for inst in instances)


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    try:
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="ascii", newline="\n") as fh:
                fh.write(text)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise IoFailure(f"{path}: {exc}") from exc


def write_label_file(instances: Sequence[YoloInstance], path) -> None:
    atomic_write_text(path, format_labels(instances))


def _number(tok: str, path, line_no) -> float:
    try:
        val = float(tok)
    except ValueError:
        raise OutOfRangeCoordinate(f"not a number: {tok!r}", path, line_no) from None
    if not math.isfinite(val):
        raise OutOfRangeCoordinate(f"non-finite value {tok!r}", path, line_no)
    return val


def parse_label_line(line: str, kind: str = GROUND_TRUTH, path=None, line_no=None) -> YoloInstance:
    tokens = line.split()
    n = len(tokens)
    if kind == GROUND_TRUTH:
        ok = n >= 7 and n % 2 == 1
        want = "an odd count >= 7 (class + x y pairs)"
    elif kind == PREDICTION:
        ok = n >= 8 and n % 2 == 0
        want = "an even count >= 8 (class + x y pairs + confidence)"
    else:
        raise ValueError(f"unknown label kind {kind!r}")
    if not ok:
        raise TokenCountMismatch(f"{n} tokens, expected {want}", path, line_no)

    cls_val = _number(tokens[0], path, line_no)
    if not cls_val.is_integer() or not 0 <= cls_val < NUM_CLASSES:
        raise OutOfRangeClass(f"class {tokens[0]!r} outside 0..{NUM_CLASSES - 1}", path, line_no)
    coord_tokens = tokens[1:-1] if kind == PREDICTION else tokens[1:]
    coords = [_number(t, path, line_no) for t in coord_tokens]
    if any(not 0.0 <= c <= 1.0 for c in coords):
        raise OutOfRangeCoordinate("coordinate outside [0, 1]", path, line_no)
    confidence = None
    if kind == PREDICTION:
        confidence = _number(tokens[-1], path, line_no)
        if not 0.0 <= confidence <= 1.0:
            raise OutOfRangeCoordinate(f"confidence {tokens[-1]} outside [0, 1]", path, line_no)
    polygon = tuple((coords[i], coords[i + 1]) for i in range(0, len(coords), 2))
    return YoloInstance(int(cls_val), polygon, confidence)


def parse_label_file(path, kind: str = GROUND_TRUTH) -> List[YoloInstance]:
    try:
        text = Path(path).read_text(encoding="ascii")
    except (OSError, UnicodeDecodeError) as exc:
        raise IoFailure(f"{path}: {exc}") from exc
    return [parse_label_line(line, kind, path, i)
            for i, line in enumerate(text.splitlines(), start=1) if line.strip()]


def fnv1a_64(data: bytes) -> int:
    h = _FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * _FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


@dataclass(frozen=True)
class SplitSpec:
    seed: int = 0
    val_fraction: float = 0.20

    def __post_init__(self):
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError(f"val_fraction must be in (0, 1), got {self.val_fraction}")

    def is_val(self, stem: str) -> bool:
        bucket = fnv1a_64(f"{stem}{self.seed}".encode("utf-8")) % 100
        return bucket < round(self.val_fraction * 100)

    def subset(self, stem: str) -> str:
        return "val" if self.is_val(stem) else "train"

    def partition(self, stems: Iterable[str]) -> Tuple[List[str], List[str]]:
        train, val = [], []
        for stem in sorted(set(stems)):
            (val if self.is_val(stem) else train).append(stem)
        return train, val


@dataclass(frozen=True)
class SkippedInstance:
    stem: str
    annotation_id: int
    reason: str
    detail: str = ""


@dataclass
class ConversionReport:
    images: int = 0
    train_images: int = 0
    val_images: int = 0
    written: int = 0
    clamped: int = 0
    skipped: List[SkippedInstance] = field(default_factory=list)
    histogram: Counter = field(default_factory=Counter)
    multipart: int = 0
    nested_parts: List[Tuple[str, int]] = field(default_factory=list)
    out_of_bounds: List[Tuple[str, int]] = field(default_factory=list)

    def merge(self, other: "ConversionReport") -> None:
        for name in ("images", "train_images", "val_images", "written", "clamped", "multipart"):
            setattr(self, name, getattr(self, name) + getattr(other, name))
        self.skipped.extend(other.skipped)
        self.histogram.update(other.histogram)
        self.nested_parts.extend(other.nested_parts)
        self.out_of_bounds.extend(other.out_of_bounds)

    def to_text(self) -> str:
        lines = [
            f"images: {self.images}",
            f"train_images: {self.train_images}",
            f"val_images: {self.val_images}",
            f"written: {self.written}",
            f"skipped: {len(self.skipped)}",
            f"clamped_negative: {self.clamped}",
            f"multipart_buildings: {self.multipart}",
            "",
            "class  range     count",
        ]
        for cls in range(1, NUM_CLASSES + 1):
            lines.append(f"{cls:<6} {CLASS_LABELS[cls]:<9} {self.histogram.get(cls, 0)}")
        for s in sorted(self.skipped, key=lambda s: (s.stem, s.annotation_id)):
            lines.append(f"skipped {s.stem} annotation {s.annotation_id}: {s.reason}")
        for stem, ann_id in sorted(self.nested_parts):
            lines.append(f"note {stem} annotation {ann_id}: nested part filled as its own region")
        for stem, ann_id in sorted(self.out_of_bounds):
            lines.append(f"note {stem} annotation {ann_id}: vertices outside image, clamped")
        return "\n".join(lines) + "\n"


def largest_part(parts) -> int:
    """Index of the largest-area part; first one wins ties."""
    best, best_area = 0, -1.0
    for i, part in enumerate(parts):
        area = polygon_area(part)
        if area > best_area:
            best, best_area = i, area
    return best


def _has_nested_part(parts) -> bool:
    for i, inner in enumerate(parts):
        for j, outer in enumerate(parts):
            if i != j and all(point_in_polygon(x, y, outer) for x, y in inner):
                return True
    return False


def convert_image(index: DatasetIndex, image, raster, subset: str) -> Tuple[List[YoloInstance], ConversionReport]:
    """Label one image; per-instance failures land in the report."""
    report = ConversionReport(images=1)
    if subset == "val":
        report.val_images = 1
    else:
        report.train_images = 1
    out = []
    for ann in index.annotations_for(image.id):
        if len(ann.parts) > 1:
            report.multipart += 1
            if _has_nested_part(ann.parts):
                report.nested_parts.append((image.stem, ann.id))
        if any(not (0 <= x <= image.width and 0 <= y <= image.height)
               for part in ann.parts for x, y in part):
            report.out_of_bounds.append((image.stem, ann.id))
        try:
            cls, est = estimate_instance(ann, raster, image)
        except (NoValidSamples, EmptyMask) as exc:
            report.skipped.append(SkippedInstance(image.stem, ann.id, type(exc).__name__, str(exc)))
            continue
        report.clamped += est.clamped
        part = ann.parts[largest_part(ann.parts)]
        out.append(YoloInstance(cls - 1, normalize(part, image.width, image.height)))
        report.histogram[cls] += 1
        report.written += 1
    return out, report


def convert_dataset(index: DatasetIndex, raster_dir, out_dir,
                    split: SplitSpec = SplitSpec()) -> ConversionReport:
    """Write ``labels/{train,val}/<stem>.txt`` for every image in ``index``."""
    alignment = validate_alignment(index, raster_dir)
    if not alignment.ok:
        first = alignment.problems()[0]
        raise Dsm2YoloError(
            f"{len(alignment.problems())} image(s) not aligned with a raster, "
            f"first: {first.stem} ({first.status})")
    label_root = Path(out_dir) / "labels"
    try:
        for subset in ("train", "val"):
            (label_root / subset).mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"{label_root}: {exc}") from exc

    report = ConversionReport()
    for image in index.images:
        raster = read_raster(find_raster(raster_dir, image.stem))
        subset = split.subset(image.stem)
        instances, image_report = convert_image(index, image, raster, subset)
        write_label_file(instances, label_root / subset / f"{image.stem}.txt")
        report.merge(image_report)
    return report


def iter_label_files(label_dir) -> List[Path]:
    """All ``*.txt`` label files below ``label_dir``, sorted by path."""
    return sorted(p for p in Path(label_dir).rglob("*.txt") if p.is_file())


def load_label_dir(label_dir, kind: str = GROUND_TRUTH) -> Dict[str, List[YoloInstance]]:
    out: Dict[str, List[YoloInstance]] = {}
    for path in iter_label_files(label_dir):
        if path.stem in out:
            raise Dsm2YoloError(f"duplicate label stem {path.stem!r} under {label_dir}")
        out[path.stem] = parse_label_file(path, kind)
    return out
