"""Frame-level orchestration: training loop, prediction and the merge rule.

Per frame the border mask always comes from the BASE prediction (never the
ground truth, which would leak labels at training time and is unavailable at
prediction time).  Training runs one full-batch gradient step per frame;
prediction keeps the base output off-border and the classifier's argmax
on-border.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .borders import BorderMask, compute_border_mask
from .features import FeatureMatrix, assemble, load_extras
from .frames import LabelMap, RgbFrame, load_label_png, load_rgb_png
from .gcn import (GcnConfig, GcnModel, NormalizedAdjacency, adam_step, backward,
                  forward, init_model)
from .graph import build_graph, renormalize
from .metrics import ConfusionMatrix, accumulate, miou

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FrameRecord:
    """Paths of one frame's RGB image, base prediction, ground truth and extras."""

    frame_id: str
    rgb_path: Path
    base_path: Path
    gt_path: Path
    extras_path: Path | None = None


@dataclass(frozen=True)
class PipelineConfig:
    gcn: GcnConfig
    thickness: int = 2
    k: int = 8
    features: tuple[str, ...] = ("base", "I")
    epochs: int = 1
    val_every: int = 1
    shuffle: bool = False
    void_label: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(self.features))
        if self.thickness < 1:
            raise ValueError("thickness must be >= 1")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.val_every < 1:
            raise ValueError("val_every must be >= 1")


@dataclass
class PreparedFrame:
    """Graph, features and labels of one frame, reusable across epochs."""

    frame_id: str
    adj: NormalizedAdjacency
    feats: FeatureMatrix
    mask: BorderMask
    base: LabelMap
    gt: LabelMap | None

    @property
    def mask_flat(self) -> np.ndarray:
        return self.mask.selected.ravel()


@dataclass
class LogRow:
    epoch: int
    frame_id: str
    loss: float | None
    val_miou: float | None


@dataclass
class TrainResult:
    model: GcnModel
    log: list[LogRow]
    best_val_miou: float | None
    best_epoch: int | None


def read_dataset_manifest(path: str | Path) -> list[FrameRecord]:
    """Parse 'id rgb base gt [extras]' lines; paths resolve against the manifest dir."""
    path = Path(path)
    base_dir = path.parent
    records = []
    for line_no, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) not in (4, 5):
            raise ValueError(f"{path}:{line_no}: expected 4 or 5 fields, found {len(parts)}")
        extras = base_dir / parts[4] if len(parts) == 5 else None
        records.append(FrameRecord(parts[0], base_dir / parts[1], base_dir / parts[2],
                                   base_dir / parts[3], extras))
    return records


def load_frame(record: FrameRecord, cfg: PipelineConfig,
               with_gt: bool = True) -> tuple[RgbFrame, LabelMap, LabelMap | None]:
    frame = load_rgb_png(record.rgb_path)
    base = load_label_png(record.base_path, cfg.gcn.num_classes, cfg.void_label)
    gt = None
    if with_gt:
        gt = load_label_png(record.gt_path, cfg.gcn.num_classes, cfg.void_label)
    if base.shape != frame.shape or (gt is not None and gt.shape != frame.shape):
        raise ValueError(f"frame '{record.frame_id}': resource dimensions disagree")
    return frame, base, gt


def prepare_frame(record: FrameRecord, cfg: PipelineConfig,
                  with_gt: bool = True) -> PreparedFrame:
    """Mask from the base prediction, k-NN graph, renormalized adjacency, features."""
    frame, base, gt = load_frame(record, cfg, with_gt=with_gt)
    mask = compute_border_mask(base, cfg.thickness)
    graph = build_graph(mask, frame, cfg.k)
    adj = renormalize(graph)
    extras = load_extras(record.extras_path) if record.extras_path else []
    feats = assemble(frame, base, extras, cfg.features)
    return PreparedFrame(record.frame_id, adj, feats, mask, base, gt)


def merge_predictions(probs: np.ndarray, base: LabelMap, mask: BorderMask) -> LabelMap:
    """Base labels off-border, classifier argmax on-border (ties: lowest class)."""
    if probs.shape[0] != base.labels.size:
        raise ValueError("probability rows do not match the frame's pixel count")
    gcn_labels = probs.argmax(axis=1).reshape(base.shape)
    merged = np.where(mask.selected, gcn_labels, base.labels)
    return LabelMap(merged, num_classes=base.num_classes, void_label=base.void_label)


def predict_merge(model: GcnModel, record: FrameRecord, cfg: PipelineConfig) -> LabelMap:
    """Refine one frame: mask and graph from the base prediction, then merge."""
    prepared = prepare_frame(record, cfg, with_gt=False)
    return _predict_prepared(model, prepared)


def _predict_prepared(model: GcnModel, prepared: PreparedFrame) -> LabelMap:
    if prepared.mask.num_selected == 0:
        return prepared.base
    probs = forward(model, prepared.adj, prepared.feats, training=False)
    return merge_predictions(probs, prepared.base, prepared.mask)


def _merged_miou(model: GcnModel, prepared_frames: list[PreparedFrame],
                 num_classes: int) -> float:
    cm = ConfusionMatrix(num_classes)
    for prepared in prepared_frames:
        merged = _predict_prepared(model, prepared)
        accumulate(cm, merged, prepared.gt)
    return miou(cm).miou


def train(records: list[FrameRecord], val: list[FrameRecord],
          cfg: PipelineConfig) -> TrainResult:
    """Epoch loop over the training frames with one Adam step per frame.

    Prepared frames are cached in memory across epochs, so the per-frame graph
    and feature construction happens once.  Frames whose base prediction has
    no border pixels are skipped with a warning and do not advance the step
    counter.  Returns the checkpoint with the best validation merged-mIoU, or
    the final model when no validation set is given.
    """
    if not records:
        raise ValueError("training set is empty")

    rng = np.random.default_rng(cfg.gcn.seed)
    prepared = [prepare_frame(r, cfg) for r in records]
    prepared_val = [prepare_frame(r, cfg) for r in val]

    dims = {p.feats.num_features for p in prepared + prepared_val}
    if len(dims) != 1:
        raise ValueError(f"inconsistent feature dimensions across frames: {sorted(dims)}")
    model = init_model(dims.pop(), cfg.gcn, rng)

    log: list[LogRow] = []
    best_model: GcnModel | None = None
    best_miou = -np.inf
    best_epoch: int | None = None

    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(prepared)) if cfg.shuffle else range(len(prepared))
        for idx in order:
            frame = prepared[idx]
            if frame.mask.num_selected == 0:
                logger.warning("frame '%s' has no border pixels; skipped", frame.frame_id)
                continue
            grads = backward(model, frame.adj, frame.feats, frame.gt.labels,
                             frame.mask_flat, cfg.gcn, rng)
            adam_step(model, grads, cfg.gcn)
            log.append(LogRow(epoch, frame.frame_id, grads.loss, None))
        if prepared_val and epoch % cfg.val_every == 0:
            val_miou = _merged_miou(model, prepared_val, cfg.gcn.num_classes)
            log.append(LogRow(epoch, "-", None, val_miou))
            if val_miou > best_miou:
                best_miou = val_miou
                best_model = model.clone()
                best_epoch = epoch

    if best_model is None:
        return TrainResult(model, log, None, None)
    return TrainResult(best_model, log, float(best_miou), best_epoch)


def write_training_log(log: list[LogRow], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "frame_id", "loss", "val_miou"])
        for row in log:
            writer.writerow([
                row.epoch,
                row.frame_id,
                "" if row.loss is None else repr(row.loss),
                "" if row.val_miou is None else repr(row.val_miou),
            ])
