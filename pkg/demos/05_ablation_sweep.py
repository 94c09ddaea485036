"""A small ablation: how the neighbour count k influences the merged mIoU.

The CLI exposes the same sweep (and the thickness / dropout / regularization
axes) as `pixelgcn ablate --axis connections`; this script drives the
library directly on a desk-scale dataset.
"""

import tempfile
from dataclasses import replace
from pathlib import Path

from pixelgcn import (ConfusionMatrix, GcnConfig, PipelineConfig, SynthConfig,
                      accumulate, generate_dataset, load_label_png, miou,
                      predict_merge, train)

root = Path(tempfile.mkdtemp(prefix="ablate_demo_"))
synth = SynthConfig(height=48, width=48, flip_prob=0.4, corruption_radius=2, seed=13)
records = generate_dataset(synth, root, {"train": 6, "val": 2, "test": 3})

base_cfg = PipelineConfig(gcn=GcnConfig(num_classes=synth.num_classes, seed=13),
                          thickness=2, k=8, features=("base", "I"),
                          epochs=12, val_every=4)


def merged_test_miou(cfg):
    result = train(records["train"], records["val"], cfg)
    cm = ConfusionMatrix(synth.num_classes)
    for record in records["test"]:
        gt = load_label_png(record.gt_path, synth.num_classes)
        accumulate(cm, predict_merge(result.model, record, cfg), gt)
    return miou(cm).miou


cm = ConfusionMatrix(synth.num_classes)
for record in records["test"]:
    gt = load_label_png(record.gt_path, synth.num_classes)
    base = load_label_png(record.base_path, synth.num_classes)
    accumulate(cm, base, gt)
print(f"base test mIoU: {miou(cm).miou:.4f}\n")

print("k   merged test mIoU")
for k in (2, 4, 8, 16):
    score = merged_test_miou(replace(base_cfg, k=k))
    print(f"{k:<3} {score:.4f}")
