"""Per-node feature assembly.

Feature names resolve to three sources: ``'I'`` (the RGB intensities scaled
to [0, 1]), ``'base'`` (the base prediction as a normalized class index) and
named extra tensors, typically intermediate activations of the base network.
Extras smaller than the frame are bilinearly upsampled, then every extra
channel is standardized to zero mean / unit variance over the frame.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .frames import LabelMap, RgbFrame

_BTF_MAGIC = b"BTF1"


@dataclass(frozen=True)
class FeatureTensor:
    """Named channel-major (C, H, W) tensor of real values."""

    name: str
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 3 or arr.size == 0:
            raise ValueError("feature tensor must have shape (C, H, W)")
        if not np.isfinite(arr).all():
            raise ValueError(f"tensor '{self.name}' contains non-finite values")
        object.__setattr__(self, "data", arr)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class FeatureMatrix:
    """Dense N x F matrix, one row per pixel in row-major order.

    ``manifest`` records the constituent feature names with their
    half-open channel spans, in assembly order.
    """

    data: np.ndarray = field(repr=False)
    manifest: tuple[tuple[str, int, int], ...]

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError("feature matrix must be 2-D")
        if not np.isfinite(arr).all():
            raise ValueError("feature matrix contains non-finite values")
        spans = sorted(self.manifest, key=lambda e: e[1])
        cursor = 0
        for name, start, stop in spans:
            if start != cursor or stop <= start:
                raise ValueError("manifest spans must partition the channels")
            cursor = stop
        if cursor != arr.shape[1]:
            raise ValueError("manifest does not cover all channels")
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "manifest", tuple(self.manifest))

    @property
    def num_nodes(self) -> int:
        return self.data.shape[0]

    @property
    def num_features(self) -> int:
        return self.data.shape[1]

    def columns_for(self, name: str) -> np.ndarray:
        for entry, start, stop in self.manifest:
            if entry == name:
                return self.data[:, start:stop]
        raise KeyError(name)


def upsample_bilinear(tensor: FeatureTensor, target_h: int, target_w: int) -> FeatureTensor:
    """Bilinear upsampling per channel, align-corners-false convention."""
    c, h, w = tensor.data.shape
    if target_h < h or target_w < w:
        raise ValueError("downsampling is not supported")
    if target_h == h and target_w == w:
        return tensor

    def axis_coords(size_in, size_out):
        src = (np.arange(size_out, dtype=np.float64) + 0.5) * (size_in / size_out) - 0.5
        src = np.clip(src, 0.0, size_in - 1.0)
        lo = np.floor(src).astype(np.int64)
        hi = np.minimum(lo + 1, size_in - 1)
        frac = src - lo
        return lo, hi, frac

    y0, y1, fy = axis_coords(h, target_h)
    x0, x1, fx = axis_coords(w, target_w)
    fy = fy[None, :, None]
    fx = fx[None, None, :]
    d = tensor.data
    top = d[:, y0][:, :, x0] * (1 - fx) + d[:, y0][:, :, x1] * fx
    bottom = d[:, y1][:, :, x0] * (1 - fx) + d[:, y1][:, :, x1] * fx
    out = top * (1 - fy) + bottom * fy
    return FeatureTensor(tensor.name, out)


def standardize_channels(tensor: FeatureTensor) -> FeatureTensor:
    """Zero mean / unit variance per channel; constant channels become zero."""
    flat = tensor.data.reshape(tensor.channels, -1)
    mean = flat.mean(axis=1, keepdims=True)
    std = flat.std(axis=1, keepdims=True)
    centered = flat - mean
    out = np.divide(centered, std, out=np.zeros_like(centered), where=std > 0)
    return FeatureTensor(tensor.name, out.reshape(tensor.data.shape))


def assemble(frame: RgbFrame, base_pred: LabelMap,
             extras: list[FeatureTensor] | tuple[FeatureTensor, ...] = (),
             spec: list[str] | tuple[str, ...] = ("base", "I")) -> FeatureMatrix:
    """Concatenate the requested features in spec order into an N x F matrix."""
    if frame.shape != base_pred.shape:
        raise ValueError(f"frame {frame.shape} does not match prediction {base_pred.shape}")
    if not spec:
        raise ValueError("feature spec must name at least one feature")
    h, w = frame.shape
    by_name = {t.name: t for t in extras}

    columns: list[np.ndarray] = []
    manifest: list[tuple[str, int, int]] = []
    cursor = 0
    for name in spec:
        if name == "I":
            block = frame.intensities.reshape(-1, 3) / 255.0
        elif name == "base":
            denom = max(base_pred.num_classes - 1, 1)
            block = (base_pred.labels.reshape(-1, 1) / denom).astype(np.float64)
        elif name in by_name:
            tensor = by_name[name]
            if tensor.height > h or tensor.width > w:
                raise ValueError(f"tensor '{name}' is larger than the frame")
            tensor = upsample_bilinear(tensor, h, w)
            tensor = standardize_channels(tensor)
            block = tensor.data.reshape(tensor.channels, -1).T
        else:
            raise KeyError(f"unknown feature '{name}'")
        columns.append(block)
        manifest.append((name, cursor, cursor + block.shape[1]))
        cursor += block.shape[1]

    return FeatureMatrix(np.hstack(columns), tuple(manifest))


def save_tensor(tensor: FeatureTensor, path: str | Path) -> None:
    """BTF1 dump: magic, u32 rank, u32 dims (C, H, W), f32 payload channel-major."""
    with open(path, "wb") as fh:
        fh.write(_BTF_MAGIC)
        fh.write(struct.pack("<IIII", 3, tensor.channels, tensor.height, tensor.width))
        fh.write(np.ascontiguousarray(tensor.data, dtype="<f4").tobytes())


def load_tensor(path: str | Path, name: str | None = None) -> FeatureTensor:
    path = Path(path)
    with open(path, "rb") as fh:
        if fh.read(4) != _BTF_MAGIC:
            raise ValueError(f"not a BTF1 tensor file: {path}")
        (rank,) = struct.unpack("<I", fh.read(4))
        dims = struct.unpack(f"<{rank}I", fh.read(4 * rank))
        if rank != 3:
            raise ValueError(f"expected rank-3 tensor, found rank {rank}")
        count = int(np.prod(dims))
        data = np.frombuffer(fh.read(4 * count), dtype="<f4").astype(np.float64)
    return FeatureTensor(name or path.stem, data.reshape(dims))


def read_tensor_manifest(path: str | Path) -> list[dict]:
    """Sidecar manifest: one 'name channels height width filename' line per tensor."""
    entries = []
    base_dir = Path(path).parent
    for line_no, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 5:
            raise ValueError(f"{path}:{line_no}: expected 5 fields, found {len(parts)}")
        name, channels, height, width, filename = parts
        entries.append({
            "name": name,
            "channels": int(channels),
            "height": int(height),
            "width": int(width),
            "path": base_dir / filename,
        })
    return entries


def write_tensor_manifest(entries: list[dict], path: str | Path) -> None:
    lines = [
        f"{e['name']} {e['channels']} {e['height']} {e['width']} {Path(e['path']).name}"
        for e in entries
    ]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def load_extras(manifest_path: str | Path) -> list[FeatureTensor]:
    """Load every tensor listed in a sidecar manifest, checking declared dims."""
    tensors = []
    for entry in read_tensor_manifest(manifest_path):
        tensor = load_tensor(entry["path"], name=entry["name"])
        declared = (entry["channels"], entry["height"], entry["width"])
        if tensor.data.shape != declared:
            raise ValueError(
                f"tensor '{entry['name']}': file dims {tensor.data.shape} "
                f"differ from manifest dims {declared}")
        tensors.append(tensor)
    return tensors
