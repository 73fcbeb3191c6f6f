"""Building blocks: frequency-selective fusion and multi-scale spatial fusion.

The core block (`FrequencySpatialFusionBlock`) chains a frequency-domain
branch and a cross-scale spatial branch, each wrapped in a residual skip:

    y = csfm(fsm(x) + x) + (fsm(x) + x)

Both branches can be disabled independently for ablations; a disabled branch
drops out bit-exactly (the block then reduces to the remaining branch, or to
the identity).
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ConfigurationError, ShapeError
from .frequency import decompose, polar_to_spatial


def pad_to_multiple(x: torch.Tensor, multiple: int) -> tuple[torch.Tensor, int, int]:
    """Pad H and W up to the next multiple; returns (padded, orig_h, orig_w).

    Reflection padding, falling back to replication when a side is shorter
    than the pad it needs (reflect requires pad < size).
    """
    h, w = x.shape[-2:]
    ph = (multiple - h % multiple) % multiple
    pw = (multiple - w % multiple) % multiple
    if ph == 0 and pw == 0:
        return x, h, w
    mode = "reflect" if (ph < h and pw < w) else "replicate"
    return F.pad(x, (0, pw, 0, ph), mode=mode), h, w


def crop_to(x: torch.Tensor, h: int, w: int) -> torch.Tensor:
    return x[..., :h, :w]


def simple_gate(x: torch.Tensor) -> torch.Tensor:
    """Split channels in half and multiply the halves elementwise."""
    a, b = x.chunk(2, dim=1)
    return a * b


class SimplifiedChannelAttention(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.conv = nn.Conv2d(channels, channels, 1)

    def forward(self, x):
        return x * self.conv(self.pool(x))


class SimpleFeatureExtractionBlock(nn.Module):
    """Five-layer extraction unit: 1x1 conv, 3x3 conv, gate, channel attention, 1x1 conv.

    The first convolution expands channels by `expansion` so the gate's
    halving lands back on the base width.
    """

    def __init__(self, channels: int, expansion: int = 2):
        super().__init__()
        inner = channels * expansion
        if inner % 2 != 0:
            raise ConfigurationError(
                f"internal channel count {inner} must be even for the gate"
            )
        self.conv_in = nn.Conv2d(channels, inner, 1)
        self.conv_mid = nn.Conv2d(inner, inner, 3, padding=1)
        self.sca = SimplifiedChannelAttention(inner // 2)
        self.conv_out = nn.Conv2d(inner // 2, channels, 1)

    def forward(self, x):
        y = self.conv_in(x)
        y = self.conv_mid(y)
        y = simple_gate(y)
        y = self.sca(y)
        return self.conv_out(y)


class FrequencySelectionModule(nn.Module):
    """Frequency-domain branch: per-bin amplitude/phase encoding.

    The input is transformed to a half-plane spectrum; amplitude and phase are
    (optionally) re-weighted by learned per-channel confidences that sum to 1
    across the two components, passed through 1x1 convolutions, and inverted
    back to the spatial domain. The residual skip is added by the caller.

    With ``selective=False`` the confidence machinery is dropped and the
    branch reduces to plain per-component convolutions (the "amplitude &
    phase only" ablation).
    """

    def __init__(self, channels: int, selective: bool = True):
        super().__init__()
        self.selective = selective
        if selective:
            self.pre_fuse = nn.Sequential(
                nn.Conv2d(2 * channels, channels, 1),
                nn.Conv2d(channels, channels, 3, padding=1),
            )
            self.pool = nn.AdaptiveAvgPool2d(1)
            self.confidence_head = nn.Conv2d(channels, 2 * channels, 1)
        self.conv_amp = nn.Conv2d(channels, channels, 1)
        self.conv_phase = nn.Conv2d(channels, channels, 1)

    def confidences(self, amp: torch.Tensor, phase: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Per-channel (alpha, beta) with alpha + beta = 1, shapes (B, C, 1, 1)."""
        fused = self.pre_fuse(torch.cat([amp, phase], dim=1))
        logits = self.confidence_head(self.pool(fused))
        b, twoc, _, _ = logits.shape
        weights = torch.softmax(logits.view(b, 2, twoc // 2, 1, 1), dim=1)
        alpha = weights[:, 0]
        # The complement form keeps alpha + beta == 1 to the last bit; the
        # two-way softmax itself can be one ulp off after the divisions.
        return alpha, 1.0 - alpha

    def forward(self, x):
        s = decompose(x)
        amp, phase = s.amplitude, s.phase
        if self.selective:
            alpha, beta = self.confidences(amp, phase)
            amp = alpha * amp
            phase = beta * phase
        return polar_to_spatial(self.conv_amp(amp), self.conv_phase(phase), s.source_width)


class CrossScaleFusionModule(nn.Module):
    """Three-branch spatial pyramid (x1, x1/2, x1/4) with dynamic fusion.

    Each branch runs a SimpleFeatureExtractionBlock at its scale; branch
    outputs are upsampled back and blended with per-position weights that are
    softmax-normalized across branches. Inputs whose sides are not divisible
    by 4 are padded reflectively and cropped back. The residual skip is added
    by the caller.
    """

    SCALES = (1.0, 0.5, 0.25)

    def __init__(self, channels: int, expansion: int = 2):
        super().__init__()
        self.branches = nn.ModuleList(
            SimpleFeatureExtractionBlock(channels, expansion) for _ in self.SCALES
        )
        self.fusion_head = nn.Conv2d(len(self.SCALES) * channels, len(self.SCALES), 1)

    def _branch_outputs(self, x: torch.Tensor) -> list[torch.Tensor]:
        h, w = x.shape[-2:]
        outs = []
        for scale, branch in zip(self.SCALES, self.branches):
            if scale == 1.0:
                y = branch(x)
            else:
                down = F.interpolate(x, scale_factor=scale, mode="bilinear", align_corners=False)
                y = F.interpolate(branch(down), size=(h, w), mode="bilinear", align_corners=False)
            outs.append(y)
        return outs

    def fusion_weights(self, x: torch.Tensor) -> torch.Tensor:
        """Per-branch spatial weights (B, n_branches, H, W), summing to 1."""
        x, h, w = pad_to_multiple(x, 4)
        outs = self._branch_outputs(x)
        return crop_to(torch.softmax(self.fusion_head(torch.cat(outs, dim=1)), dim=1), h, w)

    def forward(self, x):
        x, h, w = pad_to_multiple(x, 4)
        outs = self._branch_outputs(x)
        weights = torch.softmax(self.fusion_head(torch.cat(outs, dim=1)), dim=1)
        fused = sum(weights[:, i : i + 1] * out for i, out in enumerate(outs))
        return crop_to(fused, h, w)


class FrequencySpatialFusionBlock(nn.Module):
    """Residual block combining the frequency branch and the cross-scale branch."""

    def __init__(
        self,
        channels: int,
        use_amp_phase: bool = True,
        use_fsm: bool = True,
        use_csfm: bool = True,
        expansion: int = 2,
    ):
        super().__init__()
        if use_fsm and not use_amp_phase:
            raise ConfigurationError(
                "the selective fusion stage requires the amplitude/phase branch"
            )
        self.fsm = FrequencySelectionModule(channels, selective=use_fsm) if use_amp_phase else None
        self.csfm = CrossScaleFusionModule(channels, expansion) if use_csfm else None

    def forward(self, x):
        if x.dim() != 4:
            raise ShapeError(f"expected (B, C, H, W), got {tuple(x.shape)}")
        if self.fsm is not None:
            x = self.fsm(x) + x
        if self.csfm is not None:
            x = self.csfm(x) + x
        return x
