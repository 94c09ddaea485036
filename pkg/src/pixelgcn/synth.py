"""Synthetic desk-scale datasets: frames, ground truth and corrupted base predictions.

Each frame shows random colored shapes on a background.  The "base
prediction" equals the ground truth corrupted only near true class
boundaries, which leaves the kind of recoverable border error the refinement
stage exists to fix.  Everything is deterministic per seed; each frame draws
from its own sub-generator so generation order (or parallelism) cannot change
the output.
"""

from __future__ import annotations

import colorsys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .borders import compute_border_mask
from .features import FeatureTensor, save_tensor, upsample_bilinear, write_tensor_manifest
from .frames import LabelMap, RgbFrame, save_label_png, save_rgb_png
from .pipeline import FrameRecord

_SHAPE_KINDS = ("rect", "circle")


@dataclass(frozen=True)
class SynthConfig:
    height: int = 64
    width: int = 64
    num_classes: int = 4
    shapes: tuple[str, ...] = _SHAPE_KINDS
    shapes_per_frame: int = 6
    min_shape: int = 10
    max_shape: int = 28
    corruption: str = "flip"           # "flip" | "dilate"
    flip_prob: float = 0.4
    corruption_radius: int = 2
    noise_sigma: float = 8.0
    extras_channels: int = 0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "shapes", tuple(self.shapes))
        if self.height < 16 or self.width < 16:
            raise ValueError("frame dimensions must be >= 16")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if not self.shapes or any(s not in _SHAPE_KINDS for s in self.shapes):
            raise ValueError(f"shape vocabulary must be a subset of {_SHAPE_KINDS}")
        if self.shapes_per_frame < 1:
            raise ValueError("shapes_per_frame must be >= 1")
        if not 2 <= self.min_shape <= self.max_shape:
            raise ValueError("need 2 <= min_shape <= max_shape")
        if self.max_shape > min(self.height, self.width):
            raise ValueError("largest shape does not fit inside the frame")
        if self.corruption not in ("flip", "dilate"):
            raise ValueError("corruption must be 'flip' or 'dilate'")
        if not 0.0 <= self.flip_prob <= 1.0:
            raise ValueError("flip_prob must lie in [0, 1]")
        if self.corruption_radius < 1:
            raise ValueError("corruption_radius must be >= 1")
        if self.noise_sigma < 0 or self.extras_channels < 0:
            raise ValueError("noise_sigma and extras_channels must be >= 0")


def class_palette(num_classes: int) -> np.ndarray:
    """Evenly spaced hues, one distinct base color per class."""
    colors = []
    for c in range(num_classes):
        r, g, b = colorsys.hsv_to_rgb(c / num_classes, 0.75, 0.85)
        colors.append([255 * r, 255 * g, 255 * b])
    return np.asarray(colors)


def _draw_labels(cfg: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    labels = np.zeros((cfg.height, cfg.width), dtype=np.int64)
    yy, xx = np.mgrid[0:cfg.height, 0:cfg.width]
    for _ in range(cfg.shapes_per_frame):
        cls = int(rng.integers(1, cfg.num_classes))
        kind = cfg.shapes[int(rng.integers(len(cfg.shapes)))]
        if kind == "rect":
            sy = int(rng.integers(cfg.min_shape, cfg.max_shape + 1))
            sx = int(rng.integers(cfg.min_shape, cfg.max_shape + 1))
            y0 = int(rng.integers(0, cfg.height - sy + 1))
            x0 = int(rng.integers(0, cfg.width - sx + 1))
            labels[y0:y0 + sy, x0:x0 + sx] = cls
        else:
            radius = int(rng.integers(cfg.min_shape // 2, cfg.max_shape // 2 + 1))
            cy = int(rng.integers(radius, cfg.height - radius))
            cx = int(rng.integers(radius, cfg.width - radius))
            labels[(yy - cy) ** 2 + (xx - cx) ** 2 <= radius ** 2] = cls
    return labels


def _chebyshev_dilate(region: np.ndarray, radius: int) -> np.ndarray:
    h, w = region.shape
    out = region.copy()
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            if dy == 0 and dx == 0:
                continue
            y0, y1 = max(0, -dy), h - max(0, dy)
            x0, x1 = max(0, -dx), w - max(0, dx)
            if y0 < y1 and x0 < x1:
                out[y0:y1, x0:x1] |= region[y0 + dy:y1 + dy, x0 + dx:x1 + dx]
    return out


def _corrupt_labels(gt: np.ndarray, cfg: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    """Base prediction: ground truth disturbed only near true class boundaries."""
    base = gt.copy()
    radius = cfg.corruption_radius
    if cfg.corruption == "dilate":
        for cls in range(1, cfg.num_classes):
            region = gt == cls
            if region.any():
                grown = _chebyshev_dilate(region, radius)
                base[grown & ~region] = cls
        return base

    gt_map = LabelMap(gt, num_classes=cfg.num_classes)
    zone = compute_border_mask(gt_map, radius).selected
    flip = zone & (rng.random(gt.shape) < cfg.flip_prob)
    h, w = gt.shape
    offsets = [(dy, dx) for dy in range(-radius, radius + 1)
               for dx in range(-radius, radius + 1) if (dy, dx) != (0, 0)]
    for y, x in np.argwhere(flip):
        # Replacement label comes from a random differing neighbour, so the
        # corrupted value is a plausible local confusion.
        candidates = [gt[y + dy, x + dx] for dy, dx in offsets
                      if 0 <= y + dy < h and 0 <= x + dx < w and gt[y + dy, x + dx] != gt[y, x]]
        base[y, x] = candidates[int(rng.integers(len(candidates)))]
    return base


def _render_rgb(labels: np.ndarray, palette: np.ndarray, sigma: float,
                rng: np.random.Generator) -> np.ndarray:
    rgb = palette[labels].astype(np.float64)
    if sigma > 0:
        rgb = rgb + rng.normal(0.0, sigma, rgb.shape)
    return np.clip(rgb, 0.0, 255.0)


def _smooth_field(cfg: SynthConfig, rng: np.random.Generator) -> FeatureTensor:
    coarse_h = max(2, cfg.height // 8)
    coarse_w = max(2, cfg.width // 8)
    coarse = rng.normal(0.0, 1.0, (cfg.extras_channels, coarse_h, coarse_w))
    return upsample_bilinear(FeatureTensor("synth", coarse), cfg.height, cfg.width)


def generate_frame(cfg: SynthConfig, rng: np.random.Generator):
    """One (gt LabelMap, base LabelMap, RgbFrame, extras tensor or None)."""
    palette = class_palette(cfg.num_classes)
    gt = _draw_labels(cfg, rng)
    base = _corrupt_labels(gt, cfg, rng)
    rgb = _render_rgb(gt, palette, cfg.noise_sigma, rng)
    extras = _smooth_field(cfg, rng) if cfg.extras_channels > 0 else None
    return (LabelMap(gt, num_classes=cfg.num_classes),
            LabelMap(base, num_classes=cfg.num_classes),
            RgbFrame(rgb), extras)


def generate(cfg: SynthConfig, out_dir: str | Path, count: int,
             split: str = "frames", split_index: int = 0) -> list[FrameRecord]:
    """Materialize ``count`` frames plus a '<split>.txt' dataset manifest.

    Every frame uses an independent sub-generator seeded from
    (cfg.seed, split_index, frame index), so outputs are bit-identical per
    seed regardless of generation order.
    """
    out_dir = Path(out_dir)
    frames_dir = out_dir / "frames"
    frames_dir.mkdir(parents=True, exist_ok=True)
    records = []
    lines = []
    for idx in range(count):
        rng = np.random.default_rng([cfg.seed, split_index, idx])
        gt, base, frame, extras = generate_frame(cfg, rng)
        frame_id = f"{split}{idx:04d}"
        rgb_path = frames_dir / f"{frame_id}_rgb.png"
        base_path = frames_dir / f"{frame_id}_base.png"
        gt_path = frames_dir / f"{frame_id}_gt.png"
        save_rgb_png(frame, rgb_path)
        save_label_png(base, base_path)
        save_label_png(gt, gt_path)
        extras_path = None
        if extras is not None:
            tensor_path = frames_dir / f"{frame_id}_extra.btf"
            save_tensor(extras, tensor_path)
            extras_path = frames_dir / f"{frame_id}_extras.txt"
            write_tensor_manifest([{
                "name": "synth", "channels": extras.channels,
                "height": extras.height, "width": extras.width, "path": tensor_path,
            }], extras_path)
        fields = [frame_id, f"frames/{rgb_path.name}", f"frames/{base_path.name}",
                  f"frames/{gt_path.name}"]
        if extras_path is not None:
            fields.append(f"frames/{extras_path.name}")
        lines.append(" ".join(fields))
        records.append(FrameRecord(frame_id, rgb_path, base_path, gt_path, extras_path))
    (out_dir / f"{split}.txt").write_text("\n".join(lines) + ("\n" if lines else ""))
    return records


def generate_dataset(cfg: SynthConfig, out_dir: str | Path,
                     splits: dict[str, int]) -> dict[str, list[FrameRecord]]:
    """Materialize several splits plus a ready-to-use 'dataset.ini' config."""
    out_dir = Path(out_dir)
    records = {}
    for split_index, (split, count) in enumerate(splits.items()):
        records[split] = generate(cfg, out_dir, count, split, split_index)
    config_lines = ["[data]", f"num_classes = {cfg.num_classes}"]
    for split in records:
        config_lines.append(f"{split}_manifest = {split}.txt")
    (out_dir / "dataset.ini").write_text("\n".join(config_lines) + "\n")
    return records
