"""Polygon math: normalization, rasterization, areas, boxes and IoU.

Polygons are sequences of ``(x, y)`` pairs in pixel units. Masks are
boolean numpy arrays of shape ``(height, width)``, row-major.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence, Tuple

import numpy as np

from .errors import DegeneratePolygon, DimensionMismatch, ZeroDimension

Point = Tuple[float, float]
Polygon = Tuple[Point, ...]
NormalizedPolygon = Tuple[Point, ...]


@dataclass(frozen=True)
class BBox:
    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def __post_init__(self):
        if self.xmin > self.xmax or self.ymin > self.ymax:
            raise ValueError(f"inverted box {self}")

    @property
    def area(self) -> float:
        return (self.xmax - self.xmin) * (self.ymax - self.ymin)

    def as_tuple(self):
        return (self.xmin, self.ymin, self.xmax, self.ymax)


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """Row-major boolean grid; ``bits[r, c]`` is pixel (row r, column c)."""

    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=bool)
        if bits.ndim != 2:
            raise ValueError("mask bits must be 2-D (height, width)")
        object.__setattr__(self, "bits", bits)

    @classmethod
    def empty(cls, width: int, height: int) -> "BinaryMask":
        return cls(np.zeros((height, width), dtype=bool))

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.bits))

    def __eq__(self, other):
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self.bits.shape == other.bits.shape and bool(np.array_equal(self.bits, other.bits))

    __hash__ = None


def as_vertices(polygon) -> np.ndarray:
    """Coerce a polygon to an ``(n, 2)`` float64 array."""
    arr = np.asarray(polygon, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 2)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise DegeneratePolygon(f"polygon must be a sequence of (x, y) pairs, got shape {arr.shape}")
    return arr


def _checked(polygon) -> np.ndarray:
    v = as_vertices(polygon)
    if len(v) < 3:
        raise DegeneratePolygon(f"polygon needs at least 3 vertices, got {len(v)}")
    return v


def normalize(polygon, width: float, height: float) -> NormalizedPolygon:
    """Map pixel vertices to ``(x / width, y / height)``, clamped to [0, 1]."""
    if width <= 0 or height <= 0:
        raise ZeroDimension(f"image dimensions must be positive, got {width}x{height}")
    v = _checked(polygon)
    xs = np.clip(v[:, 0] / width, 0.0, 1.0)
    ys = np.clip(v[:, 1] / height, 0.0, 1.0)
    return tuple((float(x), float(y)) for x, y in zip(xs, ys))


def denormalize(polygon, width: float, height: float) -> Polygon:
    v = as_vertices(polygon)
    return tuple((float(x) * width, float(y) * height) for x, y in v)


def _fill_part(bits: np.ndarray, v: np.ndarray) -> None:
    """XOR-fill one ring into ``bits`` (even-odd, pixel-center sampling).

    For each edge crossing a row center line, the crossing x is computed with
    the classic ``x0 + (py - y0) * (x1 - x0) / (y1 - y0)`` form and toggles every
    pixel whose center lies at or right of it. Edges are half-open in y so
    shared vertices are counted exactly once.
    """
    height, width = bits.shape
    x0, y0 = v[:, 0], v[:, 1]
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
    centers_y = np.arange(height) + 0.5
    centers_x = np.arange(width) + 0.5

    toggles = np.zeros((height, width + 1), dtype=np.int32)
    for ax, ay, bx, by in zip(x0, y0, x1, y1):
        if ay == by:
            continue
        lo, hi = (ay, by) if ay < by else (by, ay)
        # rows whose center py satisfies lo <= py < hi
        r0 = int(np.searchsorted(centers_y, lo, side="left"))
        r1 = int(np.searchsorted(centers_y, hi, side="left"))
        if r0 >= r1:
            continue
        py = centers_y[r0:r1]
        xc = ax + (py - ay) * (bx - ax) / (by - ay)
        cols = np.searchsorted(centers_x, xc, side="left")
        np.add.at(toggles, (np.arange(r0, r1), cols), 1)
    parity = np.cumsum(toggles[:, :width], axis=1) & 1
    bits |= parity.astype(bool)


def rasterize(polygon_parts: Iterable, width: int, height: int) -> BinaryMask:
    """Union of the even-odd fills of each part at pixel centers."""
    width, height = int(width), int(height)
    if width <= 0 or height <= 0:
        raise ZeroDimension(f"cannot rasterize onto a {width}x{height} grid")
    bits = np.zeros((height, width), dtype=bool)
    for part in polygon_parts:
        part_bits = np.zeros_like(bits)
        _fill_part(part_bits, _checked(part))
        bits |= part_bits
    return BinaryMask(bits)


def polygon_area(polygon) -> float:
    v = _checked(polygon)
    v = v - v.mean(axis=0)  # centering limits cancellation far from the origin
    x, y = v[:, 0], v[:, 1]
    return float(abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))) / 2.0)


def bbox_of(polygon_parts: Sequence) -> BBox:
    parts = [as_vertices(p) for p in polygon_parts]
    if not parts:
        raise DegeneratePolygon("bbox_of needs at least one part")
    allv = np.concatenate(parts)
    if len(allv) == 0:
        raise DegeneratePolygon("bbox_of got parts without vertices")
    lo = allv.min(axis=0)
    hi = allv.max(axis=0)
    return BBox(float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1]))


def box_iou(a: BBox, b: BBox) -> float:
    iw = min(a.xmax, b.xmax) - max(a.xmin, b.xmin)
    ih = min(a.ymax, b.ymax) - max(a.ymin, b.ymin)
    inter = max(iw, 0.0) * max(ih, 0.0)
    union = a.area + b.area - inter
    if union <= 0:
        return 0.0
    return min(max(inter / union, 0.0), 1.0)


def mask_iou(a: BinaryMask, b: BinaryMask) -> float:
    if a.bits.shape != b.bits.shape:
        raise DimensionMismatch(f"mask shapes differ: {a.bits.shape} vs {b.bits.shape}")
    union = np.count_nonzero(a.bits | b.bits)
    if union == 0:
        return 0.0
    return np.count_nonzero(a.bits & b.bits) / union


def box_iou_matrix(boxes_a: Sequence[BBox], boxes_b: Sequence[BBox]) -> np.ndarray:
    """Pairwise IoU, shape ``(len(a), len(b))``; same values as ``box_iou``."""
    out = np.zeros((len(boxes_a), len(boxes_b)))
    for i, a in enumerate(boxes_a):
        for j, b in enumerate(boxes_b):
            out[i, j] = box_iou(a, b)
    return out


def _extent(bits: np.ndarray):
    rows = np.flatnonzero(bits.any(axis=1))
    if rows.size == 0:
        return None
    cols = np.flatnonzero(bits.any(axis=0))
    return rows[0], rows[-1] + 1, cols[0], cols[-1] + 1


def mask_iou_matrix(masks_a: Sequence[BinaryMask], masks_b: Sequence[BinaryMask]) -> np.ndarray:
    """Pairwise mask IoU; intersections are counted only where extents overlap."""
    out = np.zeros((len(masks_a), len(masks_b)))
    if not masks_a or not masks_b:
        return out
    shape = masks_a[0].bits.shape
    for m in (*masks_a, *masks_b):
        if m.bits.shape != shape:
            raise DimensionMismatch(f"mask shapes differ: {shape} vs {m.bits.shape}")
    ext_a = [_extent(m.bits) for m in masks_a]
    ext_b = [_extent(m.bits) for m in masks_b]
    area_a = [m.count for m in masks_a]
    area_b = [m.count for m in masks_b]
    for i, (ma, ea) in enumerate(zip(masks_a, ext_a)):
        if ea is None:
            continue
        for j, (mb, eb) in enumerate(zip(masks_b, ext_b)):
            if eb is None:
                continue
            r0, r1 = max(ea[0], eb[0]), min(ea[1], eb[1])
            c0, c1 = max(ea[2], eb[2]), min(ea[3], eb[3])
            if r0 >= r1 or c0 >= c1:
                continue
            inter = int(np.count_nonzero(ma.bits[r0:r1, c0:c1] & mb.bits[r0:r1, c0:c1]))
            out[i, j] = inter / (area_a[i] + area_b[j] - inter)
    return out


def point_in_polygon(x: float, y: float, polygon) -> bool:
    """Even-odd crossing test; a point on a left/bottom edge counts as inside."""
    v = as_vertices(polygon)
    inside = False
    n = len(v)
    for i in range(n):
        ax, ay = v[i]
        bx, by = v[(i + 1) % n]
        if (ay > y) != (by > y):
            if x >= ax + (y - ay) * (bx - ax) / (by - ay):
                inside = not inside
    return inside
