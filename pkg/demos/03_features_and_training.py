"""Feature assembly and the masked training loop on a single frame.

Features concatenate, in spec order: 'base' (the base prediction as one
normalized class-index channel), 'I' (RGB scaled to [0,1]) and any named
extra tensors (upsampled and standardized).  The classifier trains with a
full-frame batch, but the loss only sees border pixels.
"""

import numpy as np

from pixelgcn import (FeatureTensor, GcnConfig, SynthConfig, adam_step, assemble,
                      backward, build_graph, compute_border_mask, forward,
                      generate_frame, init_model, masked_accuracy, renormalize)

cfg = SynthConfig(height=48, width=48, seed=11)
gt, base, frame, _ = generate_frame(cfg, np.random.default_rng(cfg.seed))

# An "intermediate activation" stand-in: any named (C, H, W) tensor works.
extra = FeatureTensor("act", np.random.default_rng(1).normal(size=(2, 12, 12)))
features = assemble(frame, base, [extra], spec=("base", "I", "act"))
print("feature matrix:", features.data.shape)
for name, start, stop in features.manifest:
    print(f"  {name:>4}: columns {start}..{stop}")

mask = compute_border_mask(base, thickness=2)
adjacency = renormalize(build_graph(mask, frame, k=8))
mask_flat = mask.selected.ravel()

gcn_cfg = GcnConfig(num_classes=cfg.num_classes, hidden_channels=(64, 128, 64),
                    learning_rate=0.01, seed=11)
model = init_model(features.num_features, gcn_cfg)
stream = np.random.default_rng(gcn_cfg.seed)

print(f"\ntraining on {int(mask_flat.sum())} border pixels "
      f"(of {features.num_nodes} in the frame)")
for step in range(1, 121):
    grads = backward(model, adjacency, features, gt.labels, mask_flat, gcn_cfg, stream)
    adam_step(model, grads, gcn_cfg)
    if step % 20 == 0 or step == 1:
        probs = forward(model, adjacency, features)
        acc = masked_accuracy(probs, gt.labels, mask_flat)
        print(f"  step {step:3d}: loss {grads.loss:.4f}, border accuracy {acc:.3f}")

probs = forward(model, adjacency, features)
base_acc = (base.labels.ravel()[mask_flat] == gt.labels.ravel()[mask_flat]).mean()
print(f"\nbase prediction accuracy on the border: {base_acc:.3f}")
print(f"classifier accuracy on the border:       "
      f"{masked_accuracy(probs, gt.labels, mask_flat):.3f}")
