"""Intersection-over-union evaluation.

One confusion matrix is accumulated over the whole evaluation set (rows =
ground truth, columns = prediction); IoU per class is TP / (TP + FP + FN)
and the mean skips classes that never appear on either side.  Pixels whose
ground-truth or predicted label equals the void label are excluded.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .borders import BorderMask
from .frames import LabelMap


@dataclass
class ConfusionMatrix:
    num_classes: int
    counts: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.num_classes < 1:
            raise ValueError("num_classes must be >= 1")
        if self.counts is None:
            self.counts = np.zeros((self.num_classes, self.num_classes), dtype=np.int64)
        else:
            self.counts = np.asarray(self.counts, dtype=np.int64)
            if self.counts.shape != (self.num_classes, self.num_classes):
                raise ValueError("counts must be C x C")
            if self.counts.min() < 0:
                raise ValueError("counts must be non-negative")

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if other.num_classes != self.num_classes:
            raise ValueError("class counts differ")
        return ConfusionMatrix(self.num_classes, self.counts + other.counts)


@dataclass(frozen=True)
class IoUReport:
    """Per-class IoU (None when a class never appears) and their mean."""

    per_class: tuple
    miou: float
    pixel_count: int

    def to_json(self) -> str:
        return json.dumps({
            "miou": self.miou,
            "per_class_iou": list(self.per_class),
            "pixel_count": self.pixel_count,
        }, indent=2)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["class", "iou"])
            for idx, iou in enumerate(self.per_class):
                writer.writerow([idx, "" if iou is None else repr(iou)])
            writer.writerow(["mean", repr(self.miou)])


def accumulate(cm: ConfusionMatrix, pred: LabelMap, gt: LabelMap,
               restrict: BorderMask | None = None) -> ConfusionMatrix:
    """Add one frame's pixel counts to ``cm`` (in place, also returned).

    With ``restrict`` only masked pixels are evaluated.  Accumulation over
    frames is additive, so frame order never matters.
    """
    if pred.shape != gt.shape:
        raise ValueError(f"prediction {pred.shape} does not match ground truth {gt.shape}")
    if restrict is not None and restrict.shape != gt.shape:
        raise ValueError("restriction mask does not match frame dimensions")

    gt_flat = gt.labels.ravel()
    pred_flat = pred.labels.ravel()
    keep = np.ones(gt_flat.size, dtype=bool)
    if gt.void_label is not None:
        keep &= gt_flat != gt.void_label
    if pred.void_label is not None:
        keep &= pred_flat != pred.void_label
    if restrict is not None:
        keep &= restrict.selected.ravel()

    gt_kept = gt_flat[keep]
    pred_kept = pred_flat[keep]
    if gt_kept.size:
        if gt_kept.max() >= cm.num_classes or pred_kept.max() >= cm.num_classes:
            raise ValueError("non-void label outside the confusion matrix range")
        flat_idx = gt_kept * cm.num_classes + pred_kept
        cm.counts += np.bincount(flat_idx, minlength=cm.num_classes ** 2)\
            .reshape(cm.num_classes, cm.num_classes)
    return cm


def miou(cm: ConfusionMatrix) -> IoUReport:
    """Per-class IoU and their mean; classes with empty union are skipped."""
    if cm.total == 0:
        raise ValueError("confusion matrix is empty")
    counts = cm.counts
    tp = np.diag(counts).astype(np.float64)
    fp = counts.sum(axis=0) - tp
    fn = counts.sum(axis=1) - tp
    union = tp + fp + fn
    per_class = [float(tp[c] / union[c]) if union[c] > 0 else None
                 for c in range(cm.num_classes)]
    defined = [v for v in per_class if v is not None]
    return IoUReport(tuple(per_class), float(np.mean(defined)), cm.total)


def evaluate_frames(pairs, num_classes: int,
                    restrict_masks=None) -> IoUReport:
    """mIoU of (pred, gt) frame pairs, optionally restricted per frame."""
    cm = ConfusionMatrix(num_classes)
    masks = restrict_masks if restrict_masks is not None else [None] * len(pairs)
    for (pred, gt), mask in zip(pairs, masks):
        accumulate(cm, pred, gt, mask)
    return miou(cm)


def theoretical_max(base_pred: LabelMap, gt: LabelMap, mask: BorderMask,
                    cm: ConfusionMatrix | None = None) -> IoUReport | ConfusionMatrix:
    """Upper bound: replace every masked pixel of the base prediction by ground truth.

    With ``cm`` given the upper-bound frame is accumulated into it and the
    matrix is returned (for multi-frame bounds); otherwise the single-frame
    report is returned.
    """
    if base_pred.shape != gt.shape or mask.shape != gt.shape:
        raise ValueError("base prediction, ground truth and mask must share dimensions")
    upper_labels = np.where(mask.selected, gt.labels, base_pred.labels)
    upper = LabelMap(upper_labels, num_classes=gt.num_classes, void_label=gt.void_label)
    if cm is not None:
        return accumulate(cm, upper, gt)
    report_cm = ConfusionMatrix(gt.num_classes)
    accumulate(report_cm, upper, gt)
    return miou(report_cm)
