"""Border masks: which pixels get refined.

A pixel is a border pixel at thickness t when any pixel within Chebyshev
distance t carries a different class label.  The mask is computed from the
base prediction, and everything downstream (graph edges, the training loss,
the final merge) is gated by it.
"""

from pathlib import Path

import numpy as np
from PIL import Image

from pixelgcn import SynthConfig, compute_border_mask, generate_frame

out_dir = Path(__file__).parent / "output"
out_dir.mkdir(exist_ok=True)

# One synthetic frame: colored shapes, a ground truth map, and a "base
# prediction" corrupted near the true borders.
cfg = SynthConfig(height=96, width=96, num_classes=5, shapes_per_frame=7, seed=3)
gt, base, frame, _ = generate_frame(cfg, np.random.default_rng(cfg.seed))

Image.fromarray(frame.intensities.astype(np.uint8)).save(out_dir / "mask_demo_frame.png")

print(f"frame: {frame.height}x{frame.width}, {cfg.num_classes} classes")
print(f"base prediction disagrees with ground truth on "
      f"{int((gt.labels != base.labels).sum())} pixels\n")

# Thicker settings select wider bands around every class boundary; each band
# is a superset of the thinner ones.
previous = None
for thickness in (1, 2, 3, 4):
    mask = compute_border_mask(base, thickness)
    share = mask.num_selected / mask.selected.size
    growing = "" if previous is None else f"  (+{mask.num_selected - previous} px)"
    print(f"thickness {thickness}: {mask.num_selected:5d} selected ({share:5.1%}){growing}")
    previous = mask.num_selected
    Image.fromarray(mask.selected.astype(np.uint8) * 255).save(
        out_dir / f"mask_demo_t{thickness}.png")

print(f"\nmask PNGs written to {out_dir}/")
