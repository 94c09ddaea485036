"""Base segmentation networks whose layers can be hooked and exported.

Two architectures are registered: torchvision's DeepLabV3 with a ResNet-50
backbone, and a compact Unet with a ResNeXt-50 (32x4d) encoder.  Weights are
loaded from an explicit checkpoint (a plain ``state_dict`` file); for testing
without pretrained weights, :func:`make_checkpoint` writes a seeded random
initialisation.
"""

from __future__ import annotations

from pathlib import Path

import torch
from torch import nn
from torchvision.models import resnext50_32x4d
from torchvision.models.segmentation import deeplabv3_resnet50

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


class _DoubleConv(nn.Sequential):
    def __init__(self, in_ch: int, out_ch: int):
        super().__init__(
            nn.Conv2d(in_ch, out_ch, 3, padding=1, bias=False),
            nn.BatchNorm2d(out_ch),
            nn.ReLU(inplace=True),
            nn.Conv2d(out_ch, out_ch, 3, padding=1, bias=False),
            nn.BatchNorm2d(out_ch),
            nn.ReLU(inplace=True),
        )


class _UpBlock(nn.Module):
    def __init__(self, in_ch: int, skip_ch: int, out_ch: int):
        super().__init__()
        self.conv = _DoubleConv(in_ch + skip_ch, out_ch)

    def forward(self, x, skip):
        x = nn.functional.interpolate(x, size=skip.shape[-2:], mode="bilinear",
                                      align_corners=False)
        return self.conv(torch.cat([x, skip], dim=1))


class UnetResNeXt50(nn.Module):
    """Unet decoder on top of a ResNeXt-50 (32x4d) encoder.

    Decoder stages are named d4..d1 (coarse to fine) so they can be exported
    by identifier, e.g. 'decoder_d3'.
    """

    def __init__(self, num_classes: int):
        super().__init__()
        encoder = resnext50_32x4d(weights=None)
        self.stem = nn.Sequential(encoder.conv1, encoder.bn1, encoder.relu)
        self.pool = encoder.maxpool
        self.layer1 = encoder.layer1
        self.layer2 = encoder.layer2
        self.layer3 = encoder.layer3
        self.layer4 = encoder.layer4
        self.decoder_d4 = _UpBlock(2048, 1024, 256)
        self.decoder_d3 = _UpBlock(256, 512, 128)
        self.decoder_d2 = _UpBlock(128, 256, 64)
        self.decoder_d1 = _UpBlock(64, 64, 32)
        self.head = nn.Conv2d(32, num_classes, 1)

    def forward(self, x):
        size = x.shape[-2:]
        s0 = self.stem(x)            # 64 ch, /2
        s1 = self.layer1(self.pool(s0))   # 256 ch, /4
        s2 = self.layer2(s1)         # 512 ch, /8
        s3 = self.layer3(s2)         # 1024 ch, /16
        s4 = self.layer4(s3)         # 2048 ch, /32
        d4 = self.decoder_d4(s4, s3)
        d3 = self.decoder_d3(d4, s2)
        d2 = self.decoder_d2(d3, s1)
        d1 = self.decoder_d1(d2, s0)
        logits = self.head(d1)
        return nn.functional.interpolate(logits, size=size, mode="bilinear",
                                         align_corners=False)


class _DeepLabWrapper(nn.Module):
    """Unwraps torchvision's {'out': logits} dict so every model returns a tensor."""

    def __init__(self, num_classes: int):
        super().__init__()
        self.net = deeplabv3_resnet50(weights=None, weights_backbone=None,
                                      num_classes=num_classes, aux_loss=False)

    def forward(self, x):
        return self.net(x)["out"]


MODEL_BUILDERS = {
    "deeplabv3_resnet50": _DeepLabWrapper,
    "unet_resnext50": UnetResNeXt50,
}


def build_model(name: str, num_classes: int) -> nn.Module:
    if name not in MODEL_BUILDERS:
        raise ValueError(f"unknown model '{name}' (choose from {sorted(MODEL_BUILDERS)})")
    model = MODEL_BUILDERS[name](num_classes)
    model.eval()
    return model


def make_checkpoint(name: str, num_classes: int, seed: int, path: str | Path) -> Path:
    """Write a seeded random-initialisation checkpoint (state_dict file)."""
    torch.manual_seed(seed)
    model = build_model(name, num_classes)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(model.state_dict(), path)
    return path


def load_model(name: str, num_classes: int, checkpoint: str | Path) -> nn.Module:
    model = build_model(name, num_classes)
    state = torch.load(checkpoint, map_location="cpu", weights_only=True)
    model.load_state_dict(state)
    model.eval()
    return model


def resolve_layers(model: nn.Module, layer_ids: list[str]) -> dict[str, nn.Module]:
    """Map layer identifiers to submodules; every identifier must resolve."""
    by_name = dict(model.named_modules())
    resolved = {}
    for layer_id in layer_ids:
        if layer_id not in by_name:
            raise ValueError(f"layer '{layer_id}' does not resolve in this model")
        resolved[layer_id] = by_name[layer_id]
    return resolved
