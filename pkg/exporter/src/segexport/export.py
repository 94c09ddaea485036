"""Hook intermediate layers and export what the refinement toolkit consumes.

Per frame the exporter writes one BTF1 tensor file per captured layer, a
sidecar manifest ('name channels height width filename' lines) and an 8-bit
PNG base prediction (argmax over the model's output logits).  Activations
are exported at their native resolution; aligning them to the frame is the
consumer's job.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .models import IMAGENET_MEAN, IMAGENET_STD, load_model, resolve_layers

_BTF_MAGIC = b"BTF1"
_MIN_INPUT = 32


@dataclass(frozen=True)
class ExportSpec:
    model_name: str
    checkpoint: Path
    num_classes: int
    layers: tuple[str, ...]
    frames: tuple[Path, ...]
    out_dir: Path

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "frames", tuple(Path(f) for f in self.frames))
        object.__setattr__(self, "checkpoint", Path(self.checkpoint))
        object.__setattr__(self, "out_dir", Path(self.out_dir))
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if not self.frames:
            raise ValueError("no input frames given")


@dataclass
class FrameExport:
    frame_id: str
    prediction_png: Path
    manifest: Path
    tensor_files: list[Path] = field(default_factory=list)


def _load_frame_tensor(path: Path) -> torch.Tensor:
    with Image.open(path) as img:
        rgb = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
    if min(rgb.shape[0], rgb.shape[1]) < _MIN_INPUT:
        raise ValueError(f"frame {path} is smaller than the model's "
                         f"minimum input of {_MIN_INPUT} pixels")
    mean = np.asarray(IMAGENET_MEAN, dtype=np.float32)
    std = np.asarray(IMAGENET_STD, dtype=np.float32)
    normalized = (rgb - mean) / std
    return torch.from_numpy(normalized.transpose(2, 0, 1)).unsqueeze(0)


def write_btf(data: np.ndarray, path: Path) -> None:
    """BTF1: magic, u32 rank=3, u32 dims (C, H, W), little-endian f32 payload."""
    if data.ndim != 3:
        raise ValueError("expected a (C, H, W) array")
    with open(path, "wb") as fh:
        fh.write(_BTF_MAGIC)
        fh.write(struct.pack("<IIII", 3, *data.shape))
        fh.write(np.ascontiguousarray(data, dtype="<f4").tobytes())


def read_btf(path: Path) -> np.ndarray:
    with open(path, "rb") as fh:
        if fh.read(4) != _BTF_MAGIC:
            raise ValueError(f"not a BTF1 file: {path}")
        rank, = struct.unpack("<I", fh.read(4))
        dims = struct.unpack(f"<{rank}I", fh.read(4 * rank))
        payload = np.frombuffer(fh.read(4 * int(np.prod(dims))), dtype="<f4")
    return payload.reshape(dims)


def export(spec: ExportSpec) -> list[FrameExport]:
    """Run every frame through the model and materialise predictions + tensors."""
    model = load_model(spec.model_name, spec.num_classes, spec.checkpoint)
    hooked = resolve_layers(model, list(spec.layers))
    spec.out_dir.mkdir(parents=True, exist_ok=True)

    captured: dict[str, torch.Tensor] = {}
    handles = []
    try:
        for layer_id, module in hooked.items():
            def keep(module, inputs, output, _name=layer_id):
                captured[_name] = output
            handles.append(module.register_forward_hook(keep))

        results = []
        for frame_path in spec.frames:
            frame_id = frame_path.stem
            captured.clear()
            with torch.no_grad():
                logits = model(_load_frame_tensor(frame_path))
            prediction = logits[0].argmax(dim=0).to(torch.uint8).numpy()

            png_path = spec.out_dir / f"{frame_id}_pred.png"
            Image.fromarray(prediction, mode="L").save(png_path)

            entries = []
            tensor_files = []
            for layer_id in spec.layers:
                activation = captured[layer_id]
                if activation.ndim != 4 or activation.shape[0] != 1:
                    raise ValueError(f"layer '{layer_id}' did not produce a "
                                     f"(1, C, H, W) activation")
                data = activation[0].detach().cpu().numpy()
                # Layer identifiers may contain dots; keep filenames flat.
                safe = layer_id.replace(".", "_")
                tensor_path = spec.out_dir / f"{frame_id}_{safe}.btf"
                write_btf(data, tensor_path)
                tensor_files.append(tensor_path)
                entries.append(f"{safe} {data.shape[0]} {data.shape[1]} "
                               f"{data.shape[2]} {tensor_path.name}")

            manifest_path = spec.out_dir / f"{frame_id}_extras.txt"
            manifest_path.write_text("\n".join(entries) + ("\n" if entries else ""))
            results.append(FrameExport(frame_id, png_path, manifest_path, tensor_files))
        return results
    finally:
        for handle in handles:
            handle.remove()
