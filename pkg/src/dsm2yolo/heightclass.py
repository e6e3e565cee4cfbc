"""Per-building mean height and the five discrete height tiers."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Tuple

import numpy as np

from .errors import DimensionMismatch, EmptyMask, NegativeHeight, NoValidSamples
from .geometry import rasterize
from .ingest import AnnotationRecord, ImageRecord
from .raster import HeightRaster, sample_under_mask

# Inclusive upper bound (meters) of classes 1-4; class 5 is open-ended.
CLASS_UPPER_BOUNDS = (10, 20, 30, 40)
CLASS_LABELS = {1: "0-10 m", 2: "11-20 m", 3: "21-30 m", 4: "31-40 m", 5: "41+ m"}
NUM_CLASSES = 5


@dataclass(frozen=True)
class HeightEstimate:
    mean_m: int
    valid_samples: int
    total_samples: int
    clamped: bool = False


def round_half_away(x) -> int:
    half = Fraction(1, 2) if isinstance(x, Fraction) else 0.5
    r = math.floor(abs(x) + half)
    return -r if x < 0 else r


def mean_height(samples) -> HeightEstimate:
    """Rounded mean of the non-NaN samples; negative results clamp to 0."""
    arr = np.asarray(samples, dtype=np.float64).ravel()
    valid = arr[~np.isnan(arr)]
    if valid.size == 0:
        raise NoValidSamples(f"all {arr.size} samples are NaN")
    if np.isinf(valid).any():
        raise ValueError("height samples must be finite or NaN")
    values = valid.tolist()
    mean = math.fsum(values) / valid.size
    if abs(abs(mean) % 1.0 - 0.5) < 1e-6:
        # near a rounding tie the float quotient may land on the wrong side; settle it exactly
        mean = sum(map(Fraction, values)) / valid.size
    rounded = round_half_away(mean)
    return HeightEstimate(max(rounded, 0), int(valid.size), int(arr.size), clamped=rounded < 0)


def classify(h_mean: int) -> int:
    """Height tier 1..5 for a rounded, nonnegative mean height in meters."""
    if isinstance(h_mean, (float, np.floating)):
        if not float(h_mean).is_integer():
            raise ValueError(f"height must be a rounded integer, got {h_mean}")
    h = int(h_mean)
    if h < 0:
        raise NegativeHeight(f"height {h} m is negative")
    for cls, upper in enumerate(CLASS_UPPER_BOUNDS, start=1):
        if h <= upper:
            return cls
    return NUM_CLASSES


def estimate_instance(annotation: AnnotationRecord, raster: HeightRaster,
                      image: ImageRecord) -> Tuple[int, HeightEstimate]:
    if (raster.width, raster.height) != (image.width, image.height):
        raise DimensionMismatch(
            f"raster {raster.width}x{raster.height} does not match image "
            f"{image.file_name} {image.width}x{image.height}")
    mask = rasterize(annotation.parts, image.width, image.height)
    if mask.count == 0:
        raise EmptyMask(f"annotation {annotation.id} covers no pixel centers")
    est = mean_height(sample_under_mask(raster, mask))
    return classify(est.mean_m), est


def class_range(cls: int) -> Tuple[int, Optional[int]]:
    """Inclusive ``(low, high)`` meters for a tier; ``high`` is None for the top tier."""
    if not 1 <= cls <= NUM_CLASSES:
        raise ValueError(f"no height class {cls}")
    low = 0 if cls == 1 else CLASS_UPPER_BOUNDS[cls - 2] + 1
    high = CLASS_UPPER_BOUNDS[cls - 1] if cls < NUM_CLASSES else None
    return low, high
