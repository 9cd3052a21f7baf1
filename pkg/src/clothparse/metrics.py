"""Segmentation and outfit-prediction evaluation.

Whole-set pixel accuracy (background included), per-class IoU aggregated
over the set with zero-union classes excluded from the mean, and per-class
presence confusion with macro-averaged accuracy/precision/recall/F1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Palette, validate_mask


def _num_labels(palette_or_l) -> int:
    if isinstance(palette_or_l, Palette):
        return palette_or_l.num_labels
    return int(palette_or_l)


def _check_pairs(preds, gts):
    if len(preds) != len(gts):
        raise ValueError(f"got {len(preds)} predictions for {len(gts)} ground truths")
    for k, (p, g) in enumerate(zip(preds, gts)):
        if np.asarray(p).shape != np.asarray(g).shape:
            raise ValueError(f"item {k}: prediction shape {np.asarray(p).shape} "
                             f"does not match ground truth {np.asarray(g).shape}")


def pixel_accuracy(preds, gts) -> float:
    """Correct pixels over total pixels across the whole set."""
    _check_pairs(preds, gts)
    correct = 0
    total = 0
    for p, g in zip(preds, gts):
        p = np.asarray(p)
        g = np.asarray(g)
        correct += int((p == g).sum())
        total += g.size
    if total == 0:
        raise ValueError("empty evaluation set")
    return correct / total


@dataclass(frozen=True)
class ClassIou:
    intersection: int
    union: int

    @property
    def iou(self) -> float:
        return self.intersection / self.union if self.union else 0.0


@dataclass
class IouReport:
    per_class: dict[int, ClassIou]
    mean_iou: float
    pixel_accuracy: float
    excluded: list[int]

    def to_dict(self) -> dict:
        return {
            "mean_iou": self.mean_iou,
            "pixel_accuracy": self.pixel_accuracy,
            "excluded": self.excluded,
            "per_class": {str(c): {"intersection": v.intersection, "union": v.union,
                                   "iou": v.iou}
                          for c, v in self.per_class.items()},
        }


def iou_report(preds, gts, palette_or_num_labels) -> IouReport:
    """Aggregate per-class IoU over the set; classes with union 0 are listed
    and left out of the mean."""
    L = _num_labels(palette_or_num_labels)
    _check_pairs(preds, gts)
    cm = np.zeros((L, L), dtype=np.int64)
    for p, g in zip(preds, gts):
        p = validate_mask(p, L).ravel().astype(np.int64)
        g = validate_mask(g, L).ravel().astype(np.int64)
        cm += np.bincount(g * L + p, minlength=L * L).reshape(L, L)
    inter = np.diag(cm)
    union = cm.sum(axis=0) + cm.sum(axis=1) - inter
    per_class = {c: ClassIou(int(inter[c]), int(union[c])) for c in range(L)}
    included = [c for c in range(L) if union[c] > 0]
    excluded = [c for c in range(L) if union[c] == 0]
    mean_iou = float(np.mean([per_class[c].iou for c in included])) if included else 0.0
    acc = float(inter.sum() / cm.sum()) if cm.sum() else 0.0
    return IouReport(per_class, mean_iou, acc, excluded)


@dataclass(frozen=True)
class ClassConfusion:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.total if self.total else 0.0

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if (self.tp + self.fp) else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if (self.tp + self.fn) else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if (p + r) else 0.0


@dataclass
class OutfitReport:
    per_class: dict[int, ClassConfusion]
    accuracy: float
    precision: float
    recall: float
    f1: float

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy, "precision": self.precision,
            "recall": self.recall, "f1": self.f1,
            "per_class": {str(c): {"tp": v.tp, "fp": v.fp, "fn": v.fn, "tn": v.tn,
                                   "accuracy": v.accuracy, "precision": v.precision,
                                   "recall": v.recall, "f1": v.f1}
                          for c, v in self.per_class.items()},
        }


def outfit_report(pred_confidences, gts, threshold: float = 0.5) -> OutfitReport:
    """Binarize per-label confidences at the threshold and tally per-class
    confusion over images; all four averages are macro over classes."""
    if not 0 < threshold < 1:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    if len(pred_confidences) != len(gts):
        raise ValueError(f"got {len(pred_confidences)} predictions for {len(gts)} "
                         f"ground truths")
    if not gts:
        raise ValueError("empty evaluation set")
    preds = np.asarray(pred_confidences, dtype=np.float64) >= threshold
    truth = np.asarray(gts, dtype=bool)
    if preds.shape != truth.shape:
        raise ValueError(f"prediction shape {preds.shape} does not match "
                         f"ground truth {truth.shape}")
    L = truth.shape[1]
    per_class = {}
    for c in range(L):
        p = preds[:, c]
        t = truth[:, c]
        per_class[c] = ClassConfusion(
            tp=int((p & t).sum()), fp=int((p & ~t).sum()),
            fn=int((~p & t).sum()), tn=int((~p & ~t).sum()))
    vals = list(per_class.values())
    return OutfitReport(
        per_class,
        accuracy=float(np.mean([v.accuracy for v in vals])),
        precision=float(np.mean([v.precision for v in vals])),
        recall=float(np.mean([v.recall for v in vals])),
        f1=float(np.mean([v.f1 for v in vals])),
    )
