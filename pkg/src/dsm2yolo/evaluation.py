"""Box and mask mAP evaluation of YOLO segmentation predictions.

Matching is greedy per (image, class): detections in descending confidence
(input order breaks ties) each take the unmatched ground truth with the
highest IoU (lowest index breaks ties) when that IoU reaches the threshold.
AP is the mean interpolated precision over the 101 recall points
0.00, 0.01, ..., 1.00. Scalar precision/recall are read at the confidence
cut that maximizes F1 at IoU 0.50.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import DimensionUnknown, Dsm2YoloError
from .geometry import (BBox, BinaryMask, bbox_of, box_iou_matrix, denormalize,
                       mask_iou_matrix, rasterize)
from .heightclass import NUM_CLASSES
from .labels import GROUND_TRUTH, PREDICTION, YoloInstance, load_label_dir

IOU_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
RECALL_POINTS = 101
BOX = "box"
MASK = "mask"


@dataclass(eq=False)
class GroundTruth:
    image_stem: str
    class_index: int
    polygon: Sequence[Tuple[float, float]]  # normalized
    width: int
    height: int

    @cached_property
    def pixel_polygon(self):
        return denormalize(self.polygon, self.width, self.height)

    @cached_property
    def bbox(self) -> BBox:
        return bbox_of([self.pixel_polygon])

    @cached_property
    def mask(self) -> BinaryMask:
        return rasterize([self.pixel_polygon], self.width, self.height)


@dataclass(eq=False)
class Detection(GroundTruth):
    confidence: float = 0.0


def iou_matrix(gts: Sequence[GroundTruth], dets: Sequence[GroundTruth], kind: str) -> np.ndarray:
    """IoU of every ground truth (rows) against every detection (columns)."""
    if kind == BOX:
        return box_iou_matrix([g.bbox for g in gts], [d.bbox for d in dets])
    if kind == MASK:
        return mask_iou_matrix([g.mask for g in gts], [d.mask for d in dets])
    raise ValueError(f"unknown IoU kind {kind!r}")


def detection_order(confidences: Sequence[float]) -> np.ndarray:
    """Indices by descending confidence, ascending index among ties."""
    conf = np.asarray(confidences, dtype=np.float64)
    return np.lexsort((np.arange(len(conf)), -conf)) if len(conf) else np.zeros(0, dtype=int)


def greedy_match(ious: np.ndarray, confidences: Sequence[float],
                 tau: float) -> Tuple[np.ndarray, np.ndarray]:
    """Return ``(det_is_tp, gt_matched)`` for one (image, class) pair."""
    n_gt, n_det = len(ious), len(confidences)
    det_tp = np.zeros(n_det, dtype=bool)
    gt_matched = np.zeros(n_gt, dtype=bool)
    for d in detection_order(confidences):
        if n_gt == 0:
            break
        cand = np.where(gt_matched, -1.0, ious[:, d])
        g = int(np.argmax(cand))  # first max = lowest GT index
        if not gt_matched[g] and cand[g] >= tau:
            gt_matched[g] = True
            det_tp[d] = True
    return det_tp, gt_matched


@dataclass(frozen=True)
class MatchResult:
    det_tp: Tuple[bool, ...]
    gt_matched: Tuple[bool, ...]


def match_detections(gts: Sequence[GroundTruth], dets: Sequence[Detection],
                     iou_kind: str = BOX, tau: float = 0.5) -> MatchResult:
    if not 0.0 < tau < 1.0:
        raise ValueError(f"IoU threshold must be in (0, 1), got {tau}")
    ious = iou_matrix(gts, dets, iou_kind)
    det_tp, gt_matched = greedy_match(ious, [d.confidence for d in dets], tau)
    return MatchResult(tuple(bool(x) for x in det_tp), tuple(bool(x) for x in gt_matched))


@dataclass(frozen=True)
class PRCurve:
    points: Tuple[Tuple[float, float], ...]
    ap: float


def average_precision(flags: Sequence[bool], num_gt: int) -> PRCurve:
    """101-point interpolated AP for TP/FP flags already in rank order."""
    flags = np.asarray(flags, dtype=bool)
    if num_gt <= 0 or flags.size == 0:
        tp = np.cumsum(flags)
        pts = tuple((0.0, float(t / (i + 1))) for i, t in enumerate(tp))
        return PRCurve(pts, 0.0)
    tp = np.cumsum(flags)
    ranks = np.arange(1, flags.size + 1)
    precision = tp / ranks
    recall = tp / num_gt
    # interpolated precision: best precision at this rank or any later one
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    # recall >= j/100 compared exactly as 100*tp >= j*num_gt
    thresholds = np.arange(RECALL_POINTS) * num_gt
    first = np.searchsorted(100 * tp, thresholds, side="left")
    reached = first < flags.size
    interp = np.where(reached, envelope[np.minimum(first, flags.size - 1)], 0.0)
    pts = tuple(zip(recall.tolist(), precision.tolist()))
    return PRCurve(pts, float(interp.sum() / RECALL_POINTS))


def precision_recall_at_best_f1(flags: Sequence[bool], confidences: Sequence[float],
                                num_gt: int) -> Tuple[float, float]:
    """Precision and recall at the confidence cut with the highest F1.

    Cuts fall only between distinct confidences, so tied detections are kept
    or dropped together. The highest-confidence cut wins F1 ties.
    """
    flags = np.asarray(flags, dtype=bool)
    conf = np.asarray(confidences, dtype=np.float64)
    if num_gt <= 0 or flags.size == 0:
        return 0.0, 0.0
    tp = np.cumsum(flags)
    n = np.arange(1, flags.size + 1)
    ends = np.append(conf[1:] != conf[:-1], True)
    tp, n = tp[ends], n[ends]
    f1 = 2.0 * tp / (n + num_gt)
    best = int(np.argmax(f1))
    return float(tp[best] / n[best]), float(tp[best] / num_gt)


@dataclass
class ClassMetrics:
    name: str
    images: int = 0
    buildings: int = 0
    precision_b: float = 0.0
    recall_b: float = 0.0
    map50_b: float = 0.0
    map5095_b: float = 0.0
    precision_m: float = 0.0
    recall_m: float = 0.0
    map50_m: float = 0.0
    map5095_m: float = 0.0
    ap_b: Tuple[float, ...] = ()
    ap_m: Tuple[float, ...] = ()


METRIC_FIELDS = ("precision_b", "recall_b", "map50_b", "map5095_b",
                 "precision_m", "recall_m", "map50_m", "map5095_m")
_COLUMN_TITLES = ("Prec.(B)", "Recall(B)", "mAP@50(B)", "mAP@50-95(B)",
                  "Prec.(M)", "Recall(M)", "mAP@50(M)", "mAP@50-95(M)")


@dataclass
class EvalReport:
    rows: Dict[str, ClassMetrics] = field(default_factory=dict)
    included: Tuple[int, ...] = ()

    @property
    def all(self) -> ClassMetrics:
        return self.rows["All"]

    def row(self, cls: int) -> ClassMetrics:
        """Row for a 1-based height class."""
        return self.rows[str(cls)]

    def to_dict(self) -> dict:
        return {
            "images_counted_from": "ground truth",
            "classes_in_mean": list(self.included),
            "rows": [{k: v for k, v in asdict(r).items()} for r in self.rows.values()],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_text(self) -> str:
        head = ("Class", "Images", "Buildings") + _COLUMN_TITLES
        body = []
        for r in self.rows.values():
            body.append((r.name, str(r.images), str(r.buildings))
                        + tuple(f"{getattr(r, f):.3f}" for f in METRIC_FIELDS))
        widths = [max(len(row[i]) for row in (head, *body)) for i in range(len(head))]
        fmt = lambda row: "  ".join(c.ljust(w) if i == 0 else c.rjust(w)
                                    for i, (c, w) in enumerate(zip(row, widths)))
        lines = ["# Images/Buildings count ground-truth instances; 'All' averages classes "
                 "with at least one ground-truth instance", fmt(head)]
        lines += [fmt(b) for b in body]
        return "\n".join(lines) + "\n"


def _scores_for_kind(per_image, num_gt: int, kind: str):
    """AP per IoU threshold plus best-F1 precision/recall at IoU 0.50."""
    ious = {stem: iou_matrix(gts, dets, kind) for stem, (gts, dets) in per_image.items()}
    ranked = []  # (conf, stem, index)
    for stem, (_, dets) in per_image.items():
        ranked += [(d.confidence, stem, i) for i, d in enumerate(dets)]
    ranked.sort(key=lambda t: (-t[0], t[1], t[2]))
    confs = [t[0] for t in ranked]

    aps = []
    pr = (0.0, 0.0)
    for tau in IOU_THRESHOLDS:
        tp_by_image = {stem: greedy_match(ious[stem], [d.confidence for d in dets], tau)[0]
                       for stem, (_, dets) in per_image.items()}
        flags = [bool(tp_by_image[stem][i]) for _, stem, i in ranked]
        aps.append(average_precision(flags, num_gt).ap)
        if tau == IOU_THRESHOLDS[0]:
            pr = precision_recall_at_best_f1(flags, confs, num_gt)
    return tuple(aps), pr


def evaluate_instances(gt: Mapping[str, Sequence[YoloInstance]],
                       pred: Mapping[str, Sequence[YoloInstance]],
                       image_sizes: Mapping[str, Tuple[int, int]]) -> EvalReport:
    """Score in-memory label sets; keys are image stems."""
    stems = sorted(set(gt) | set(pred))
    for stem in stems:
        if (gt.get(stem) or pred.get(stem)) and stem not in image_sizes:
            raise DimensionUnknown(f"no image size for {stem!r}")

    report = EvalReport()
    per_class = []
    for cls_idx in range(NUM_CLASSES):
        per_image = {}
        row = ClassMetrics(str(cls_idx + 1))
        for stem in stems:
            gts = [GroundTruth(stem, cls_idx, inst.polygon, *image_sizes[stem])
                   for inst in gt.get(stem, ()) if inst.class_index == cls_idx]
            dets = [Detection(stem, cls_idx, inst.polygon, *image_sizes[stem],
                              confidence=float(inst.confidence))
                    for inst in pred.get(stem, ()) if inst.class_index == cls_idx]
            if gts:
                row.images += 1
                row.buildings += len(gts)
            if gts or dets:
                per_image[stem] = (gts, dets)
        if row.buildings:
            row.ap_b, (row.precision_b, row.recall_b) = _scores_for_kind(per_image, row.buildings, BOX)
            row.ap_m, (row.precision_m, row.recall_m) = _scores_for_kind(per_image, row.buildings, MASK)
            row.map50_b, row.map5095_b = row.ap_b[0], _mean_ap(row.ap_b)
            row.map50_m, row.map5095_m = row.ap_m[0], _mean_ap(row.ap_m)
        per_class.append(row)

    included = tuple(int(r.name) for r in per_class if r.buildings)
    total = ClassMetrics("All", images=sum(1 for s in gt), buildings=sum(r.buildings for r in per_class))
    if included:
        for f in METRIC_FIELDS:
            setattr(total, f, sum(getattr(r, f) for r in per_class if r.buildings) / len(included))
    report.rows["All"] = total
    for r in per_class:
        report.rows[r.name] = r
    report.included = included
    return report


def _mean_ap(aps: Sequence[float]) -> float:
    mean = math.fsum(aps) / len(aps)
    # the exact mean cannot exceed the maximum; only rounding can push it past
    return min(mean, max(aps))


def evaluate(gt_dir, pred_dir, image_sizes: Mapping[str, Tuple[int, int]]) -> EvalReport:
    gt = load_label_dir(gt_dir, GROUND_TRUTH)
    pred = load_label_dir(pred_dir, PREDICTION) if Path(pred_dir).is_dir() else {}
    return evaluate_instances(gt, pred, image_sizes)


def read_sizes_file(path) -> Dict[str, Tuple[int, int]]:
    """Parse ``<stem> <W> <H>`` lines."""
    sizes = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split()
        try:
            stem, w, h = parts[0], int(parts[1]), int(parts[2])
            if len(parts) != 3 or w <= 0 or h <= 0:
                raise ValueError
        except (ValueError, IndexError):
            raise Dsm2YoloError(f"{path}:{n}: expected '<stem> <W> <H>', got {line!r}") from None
        sizes[stem] = (w, h)
    return sizes
