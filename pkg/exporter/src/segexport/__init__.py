"""Export base-network predictions and intermediate activations.

Companion to the `pixelgcn` refinement toolkit: hooks chosen layers of a
pretrained segmentation network and writes the BTF1 tensors, sidecar
manifests and base-prediction PNGs that toolkit consumes.
"""

from .export import ExportSpec, FrameExport, export, read_btf, write_btf
from .models import (MODEL_BUILDERS, UnetResNeXt50, build_model, load_model,
                     make_checkpoint, resolve_layers)

__version__ = "0.1.0"
