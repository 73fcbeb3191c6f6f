"""Pluggable frozen feature extractors for perceptual losses and metrics.

The default extractor is a 19-layer VGG-style convolutional stack whose
module layout matches the torchvision `vgg19().features` naming, so an
image-classification-pretrained state dict can be loaded from a local file.
When no weights file is available the stack is seeded-randomly initialized
instead; that keeps every test runnable offline, but any score computed this
way is flagged so reports can label it as non-comparable to published
numbers.

Inputs are RGB in [0, 1]; the extractor applies the standard
classification-training channel normalization internally.
"""

from __future__ import annotations

import logging
import math
from pathlib import Path

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ConfigurationError, ShapeError

logger = logging.getLogger(__name__)

VGG19_LAYOUT = (
    64, 64, "M", 128, 128, "M", 256, 256, 256, 256, "M",
    512, 512, 512, 512, "M", 512, 512, 512, 512, "M",
)
# Sequential indices of the first four pooling layers in the layout above.
DEFAULT_TAPS = (4, 9, 18, 27)

_CHANNEL_MEAN = (0.485, 0.456, 0.406)
_CHANNEL_STD = (0.229, 0.224, 0.225)


def build_conv_stack() -> nn.Sequential:
    layers: list[nn.Module] = []
    in_ch = 3
    for v in VGG19_LAYOUT:
        if v == "M":
            layers.append(nn.MaxPool2d(2, 2))
        else:
            layers.append(nn.Conv2d(in_ch, v, 3, padding=1))
            layers.append(nn.ReLU(inplace=False))
            in_ch = v
    return nn.Sequential(*layers)


def _seeded_init(features: nn.Sequential, seed: int) -> None:
    gen = torch.Generator().manual_seed(seed)
    for m in features:
        if isinstance(m, nn.Conv2d):
            fan_in = m.in_channels * m.kernel_size[0] * m.kernel_size[1]
            std = math.sqrt(2.0 / fan_in)
            with torch.no_grad():
                m.weight.copy_(torch.randn(m.weight.shape, generator=gen) * std)
                m.bias.zero_()


class FrozenFeatureExtractor(nn.Module):
    """Conv stack with declared tap layers, frozen and in eval mode.

    ``pretrained`` records whether real weights were loaded; consumers use it
    to label derived scores.
    """

    def __init__(self, features: nn.Sequential, taps=DEFAULT_TAPS, pretrained: bool = False):
        super().__init__()
        if not taps or max(taps) >= len(features):
            raise ConfigurationError(f"tap indices {taps} out of range for the stack")
        self.features = features
        self.taps = tuple(sorted(taps))
        self.pretrained = pretrained
        mean = torch.tensor(_CHANNEL_MEAN).view(1, 3, 1, 1)
        std = torch.tensor(_CHANNEL_STD).view(1, 3, 1, 1)
        self.register_buffer("mean", mean)
        self.register_buffer("std", std)
        self.requires_grad_(False)
        self.eval()

    def train(self, mode: bool = True):
        # stays frozen in eval mode regardless of the enclosing model
        return super().train(False)

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        if x.dim() == 3:
            x = x.unsqueeze(0)
        if x.dim() != 4 or x.shape[1] != 3:
            raise ShapeError(f"expected (B, 3, H, W) RGB input, got {tuple(x.shape)}")
        x = (x - self.mean) / self.std
        out = []
        for i, layer in enumerate(self.features):
            x = layer(x)
            if i in self.taps:
                out.append(x)
            if i == self.taps[-1]:
                break
        return out


def load_feature_extractor(
    weights_path: str | Path | None = None,
    taps=DEFAULT_TAPS,
    seed: int = 0,
) -> FrozenFeatureExtractor:
    """Build the default extractor, loading weights from ``weights_path`` if
    it exists, otherwise falling back to a seeded random stack (logged)."""
    features = build_conv_stack()
    pretrained = False
    if weights_path is not None and Path(weights_path).exists():
        state = torch.load(weights_path, map_location="cpu", weights_only=True)
        if any(k.startswith("features.") for k in state):
            state = {
                k[len("features."):]: v for k, v in state.items() if k.startswith("features.")
            }
        features.load_state_dict(state)
        pretrained = True
    else:
        if weights_path is not None:
            logger.warning(
                "extractor weights %s not found; using seeded-random fallback "
                "(scores are non-comparable to published numbers)", weights_path
            )
        else:
            logger.warning(
                "no extractor weights configured; using seeded-random fallback "
                "(scores are non-comparable to published numbers)"
            )
        _seeded_init(features, seed)
    return FrozenFeatureExtractor(features, taps=taps, pretrained=pretrained)


class RandomVideoEmbedder:
    """Seeded spatiotemporal projection used as the offline video-embedding
    fallback for distribution-level video comparison.

    Frames are resized to a fixed small grid and projected with a fixed
    random matrix; the embedding concatenates the temporal mean of the
    per-frame features with the temporal mean of absolute frame-to-frame
    feature differences, so both appearance and temporal coherence enter.
    """

    pretrained = False

    def __init__(self, dim: int = 128, seed: int = 0, frame_size: int = 16):
        if dim % 2 != 0:
            raise ConfigurationError("embedding dim must be even")
        self.dim = dim
        self.frame_size = frame_size
        gen = torch.Generator().manual_seed(seed)
        n_in = 3 * frame_size * frame_size
        self.proj = torch.randn(dim // 2, n_in, generator=gen) / math.sqrt(n_in)

    def __call__(self, video: torch.Tensor) -> torch.Tensor:
        if video.dim() != 4 or video.shape[1] != 3:
            raise ShapeError(f"expected (T, 3, H, W) video, got {tuple(video.shape)}")
        if video.shape[0] < 2:
            raise ShapeError("video embedding needs at least 2 frames")
        small = F.interpolate(
            video.to(torch.float32),
            size=(self.frame_size, self.frame_size),
            mode="bilinear",
            align_corners=False,
        )
        feats = small.reshape(video.shape[0], -1) @ self.proj.T
        static = feats.mean(dim=0)
        motion = (feats[1:] - feats[:-1]).abs().mean(dim=0)
        return torch.cat([static, motion])
