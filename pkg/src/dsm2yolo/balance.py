"""Class distribution, inverse-frequency image weights and focal loss."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Dict, Mapping, Sequence

import numpy as np

from .errors import DomainError, EmptyDataset
from .heightclass import CLASS_LABELS, NUM_CLASSES
from .labels import GROUND_TRUTH, load_label_dir


@dataclass(frozen=True)
class ClassHistogram:
    counts: Dict[int, int]

    @classmethod
    def from_classes(cls, classes) -> "ClassHistogram":
        c = Counter(classes)
        return cls({k: c.get(k, 0) for k in range(1, NUM_CLASSES + 1)})

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def percentages(self) -> Dict[int, float]:
        """Share of each class in percent with one decimal; zeros when empty.

        Tenths are apportioned by largest remainder so the shares add up to
        exactly 100.0 and each stays within 0.1 of its exact value.
        """
        total = self.total
        if not total:
            return {k: 0.0 for k in self.counts}
        keys = sorted(self.counts)
        floors = {k: self.counts[k] * 1000 // total for k in keys}
        rema = {k: self.counts[k] * 1000 % total for k in keys}
        spare = 1000 - sum(floors.values())
        for k in sorted(keys, key=lambda k: (-rema[k], k))[:spare]:
            floors[k] += 1
        return {k: floors[k] / 10 for k in keys}

    def to_text(self) -> str:
        pct = self.percentages()
        lines = ["class  range     count  percent"]
        for k in range(1, NUM_CLASSES + 1):
            lines.append(f"{k:<6} {CLASS_LABELS[k]:<9} {self.counts.get(k, 0):<6} {pct.get(k, 0.0):.1f}")
        lines.append(f"total  {'':<9} {self.total}")
        return "\n".join(lines) + "\n"


def per_image_classes(label_dir) -> Dict[str, list]:
    """Height classes (1-based) of every ground-truth instance, keyed by stem."""
    return {stem: [inst.height_class for inst in insts]
            for stem, insts in load_label_dir(label_dir, GROUND_TRUTH).items()}


def class_histogram(label_dir) -> ClassHistogram:
    classes = per_image_classes(label_dir)
    return ClassHistogram.from_classes(c for cs in classes.values() for c in cs)


@dataclass(frozen=True)
class SampleWeights:
    weights: Dict[str, float]
    normalized: bool = True

    def to_text(self) -> str:
        return "".join(f"{stem} {w:.9f}\n" for stem, w in sorted(self.weights.items()))


def weights_from_classes(classes_by_image: Mapping[str, Sequence[int]]) -> SampleWeights:
    """Mean inverse class frequency per image, normalized to sum to 1.

    Images without instances get the smallest raw weight seen.
    """
    counts = Counter(c for cs in classes_by_image.values() for c in cs)
    total = sum(counts.values())
    if not classes_by_image or total == 0:
        raise EmptyDataset("no ground-truth instances to derive class frequencies from")
    inv = {c: total / n for c, n in counts.items()}
    raw = {stem: (sum(inv[c] for c in cs) / len(cs) if cs else None)
           for stem, cs in classes_by_image.items()}
    floor = min(w for w in raw.values() if w is not None)
    raw = {stem: (floor if w is None else w) for stem, w in raw.items()}
    norm = sum(raw.values())
    return SampleWeights({stem: raw[stem] / norm for stem in sorted(raw)}, normalized=True)


def image_weights(label_dir) -> SampleWeights:
    return weights_from_classes(per_image_classes(label_dir))


def focal_loss(p, alpha: float = 0.25, gamma: float = 2.0):
    """Focal loss ``-alpha (1-p)^gamma log p`` and its derivative in ``p``.

    Works on scalars or arrays; returns ``(loss, dloss_dp)``.
    """
    p_arr = np.asarray(p, dtype=np.float64)
    if np.any(~(p_arr > 0.0)) or np.any(p_arr > 1.0):
        raise DomainError("p must lie in (0, 1]")
    if not 0.0 < alpha <= 1.0:
        raise DomainError(f"alpha must lie in (0, 1], got {alpha}")
    if not gamma >= 0.0:
        raise DomainError(f"gamma must be nonnegative, got {gamma}")

    q = 1.0 - p_arr
    log_p = np.log(p_arr)
    loss = -alpha * q ** gamma * log_p + 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        # d/dp = alpha * (gamma (1-p)^(gamma-1) log p - (1-p)^gamma / p)
        modulated = np.where(q > 0, gamma * q ** (gamma - 1.0) * log_p, 0.0) if gamma > 0 else 0.0
    grad = alpha * (modulated - q ** gamma / p_arr)
    if np.ndim(loss) == 0:
        return float(loss), float(grad)
    return loss, np.asarray(grad, dtype=np.float64) * np.ones_like(loss)
