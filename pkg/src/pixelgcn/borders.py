"""Border-pixel selection.

A pixel counts as a border pixel at thickness ``t`` when some pixel within
Chebyshev distance <= t carries a different class label.  Selecting on both
sides of every class boundary yields a band roughly ``2 t`` pixels wide.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .frames import LabelMap


@dataclass(frozen=True)
class BorderMask:
    """Boolean per-pixel selection at a given border thickness."""

    selected: np.ndarray = field(repr=False)
    thickness: int

    def __post_init__(self):
        sel = np.asarray(self.selected)
        if sel.ndim != 2 or sel.dtype != np.bool_:
            raise ValueError("selection must be a 2-D boolean array")
        if self.thickness < 1:
            raise ValueError("thickness must be >= 1")
        object.__setattr__(self, "selected", sel)

    @property
    def height(self) -> int:
        return self.selected.shape[0]

    @property
    def width(self) -> int:
        return self.selected.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.selected.shape

    @property
    def num_selected(self) -> int:
        return int(self.selected.sum())


def compute_border_mask(pred: LabelMap, thickness: int) -> BorderMask:
    """Mark every pixel with a differing label within Chebyshev distance <= thickness.

    Vectorized as one shifted-slice comparison per (dy, dx) offset, so the cost
    is O(H * W * thickness^2) with small constants.
    """
    if thickness < 1:
        raise ValueError("thickness must be >= 1")
    labels = pred.labels
    h, w = labels.shape
    selected = np.zeros((h, w), dtype=bool)
    for dy in range(-thickness, thickness + 1):
        for dx in range(-thickness, thickness + 1):
            if dy == 0 and dx == 0:
                continue
            y0, y1 = max(0, -dy), h - max(0, dy)
            x0, x1 = max(0, -dx), w - max(0, dx)
            if y0 >= y1 or x0 >= x1:
                continue
            here = labels[y0:y1, x0:x1]
            there = labels[y0 + dy:y1 + dy, x0 + dx:x1 + dx]
            selected[y0:y1, x0:x1] |= here != there
    return BorderMask(selected, thickness)
