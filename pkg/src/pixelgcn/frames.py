"""Per-frame containers: class label maps and RGB frames, plus PNG I/O.

Label maps travel as 8-bit single-channel PNGs whose pixel value is the
class index.  Frames travel as 24-bit RGB PNGs.  In memory everything is
numpy: labels as an (H, W) integer array, intensities as an (H, W, 3)
float array in [0, 255].
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image


@dataclass(frozen=True)
class LabelMap:
    """Per-pixel class indices for one frame (ground truth or a base prediction).

    ``labels`` is an (H, W) integer array in row-major order.  Every entry must
    be < ``num_classes``, except pixels equal to ``void_label`` (if set), which
    are ignored during evaluation.
    """

    labels: np.ndarray
    num_classes: int
    void_label: int | None = None

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 2 or labels.size == 0:
            raise ValueError("label map must be a non-empty 2-D array")
        if not np.issubdtype(labels.dtype, np.integer):
            raise ValueError("label map must hold integers")
        if labels.min() < 0:
            raise ValueError("class indices must be non-negative")
        if self.num_classes < 1:
            raise ValueError("num_classes must be >= 1")
        in_range = labels < self.num_classes
        if self.void_label is not None:
            in_range |= labels == self.void_label
        if not in_range.all():
            bad = int(labels[~in_range].flat[0])
            raise ValueError(f"label {bad} out of range for {self.num_classes} classes")
        object.__setattr__(self, "labels", labels)

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape


@dataclass(frozen=True)
class RgbFrame:
    """One RGB frame with intensities kept as real numbers in [0, 255]."""

    intensities: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.asarray(self.intensities, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[2] != 3 or arr.shape[0] * arr.shape[1] == 0:
            raise ValueError("frame must have shape (H, W, 3) with H, W >= 1")
        if not np.isfinite(arr).all():
            raise ValueError("frame intensities must be finite")
        if arr.min() < 0 or arr.max() > 255:
            raise ValueError("frame intensities must lie in [0, 255]")
        object.__setattr__(self, "intensities", arr)

    @property
    def height(self) -> int:
        return self.intensities.shape[0]

    @property
    def width(self) -> int:
        return self.intensities.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.intensities.shape[:2]


def load_label_png(path: str | Path, num_classes: int,
                   void_label: int | None = None) -> LabelMap:
    """Read an 8-bit single-channel PNG as a label map."""
    with Image.open(path) as img:
        arr = np.asarray(img.convert("L"), dtype=np.int64)
    return LabelMap(arr, num_classes=num_classes, void_label=void_label)


def save_label_png(label_map: LabelMap, path: str | Path) -> None:
    labels = label_map.labels
    if labels.max() > 255:
        raise ValueError("class indices above 255 do not fit an 8-bit PNG")
    Image.fromarray(labels.astype(np.uint8), mode="L").save(path)


def load_rgb_png(path: str | Path) -> RgbFrame:
    """Read a 24-bit RGB PNG as a frame."""
    with Image.open(path) as img:
        arr = np.asarray(img.convert("RGB"), dtype=np.float64)
    return RgbFrame(arr)


def save_rgb_png(frame: RgbFrame, path: str | Path) -> None:
    arr = np.clip(np.rint(frame.intensities), 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(path)
