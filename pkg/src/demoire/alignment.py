"""Frame-level post alignment: learned offsets plus deformable convolution.

Offsets are predicted per decoder stage from (neighbor, reference) feature
pairs and propagated coarse-to-fine: the previous stage's offset field is
bilinearly upscaled and its displacement values doubled, since a motion of d
pixels at half resolution is 2d pixels at full resolution.

The deformable convolution here samples with bilinear interpolation and
clamps out-of-bounds sample positions to the border (so a zero offset field
makes it a plain convolution with replicate padding). Offset channel layout
is (group, tap, dy/dx): channel ``g*2*K + 2*k`` is the dy of tap k in group
g, and ``+1`` its dx, taps in row-major kernel order.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ShapeError


def default_deform_groups(channels: int) -> int:
    """8 groups at the reference width of 64, proportionally fewer below."""
    return max(1, min(8, channels // 8))


def upscale_offset(offset: torch.Tensor, factor: int = 2) -> torch.Tensor:
    """Upscale an offset field spatially and scale its values to match."""
    up = F.interpolate(offset, scale_factor=factor, mode="bilinear", align_corners=False)
    return up * factor


def _border_sample(x: torch.Tensor, py: torch.Tensor, px: torch.Tensor) -> torch.Tensor:
    """Bilinear sampling of (B, G, Cg, H, W) at absolute coords (B, G, H, W).

    Coordinates outside the image clamp to the border; their gradient w.r.t.
    the coordinates is 0 there (both interpolation endpoints coincide).
    """
    b, g, cg, h, w = x.shape
    y0 = py.floor()
    x0 = px.floor()
    wy = (py - y0).reshape(b, g, 1, h * w)
    wx = (px - x0).reshape(b, g, 1, h * w)
    flat = x.reshape(b, g, cg, h * w)

    def gather(yi, xi):
        yi = yi.clamp(0, h - 1).long()
        xi = xi.clamp(0, w - 1).long()
        idx = (yi * w + xi).reshape(b, g, 1, h * w).expand(b, g, cg, h * w)
        return torch.gather(flat, 3, idx)

    out = (
        (1 - wy) * (1 - wx) * gather(y0, x0)
        + (1 - wy) * wx * gather(y0, x0 + 1)
        + wy * (1 - wx) * gather(y0 + 1, x0)
        + wy * wx * gather(y0 + 1, x0 + 1)
    )
    return out.reshape(b, g, cg, h, w)


def deform_conv2d(
    feature: torch.Tensor,
    offset: torch.Tensor,
    weight: torch.Tensor,
    bias: torch.Tensor | None = None,
) -> torch.Tensor:
    """Deformable convolution with border-clamped bilinear sampling.

    feature: (B, C_in, H, W); offset: (B, 2*K*G, H, W) per the module-level
    layout; weight: (C_out, C_in, kh, kw). Differentiable in all three.
    """
    b, c, h, w = feature.shape
    c_out, c_in, kh, kw = weight.shape
    if c_in != c:
        raise ShapeError(f"weight expects {c_in} input channels, feature has {c}")
    k = kh * kw
    if offset.shape[0] != b or offset.shape[-2:] != (h, w):
        raise ShapeError(
            f"offset shape {tuple(offset.shape)} does not match feature {tuple(feature.shape)}"
        )
    if offset.shape[1] % (2 * k) != 0:
        raise ShapeError(
            f"offset has {offset.shape[1]} channels, not a multiple of 2*K={2 * k}"
        )
    groups = offset.shape[1] // (2 * k)
    if c % groups != 0:
        raise ShapeError(f"{c} channels not divisible by {groups} deformable groups")

    off = offset.reshape(b, groups, k, 2, h, w)
    grid_y = torch.arange(h, device=feature.device, dtype=feature.dtype).view(1, 1, h, 1)
    grid_x = torch.arange(w, device=feature.device, dtype=feature.dtype).view(1, 1, 1, w)
    grouped = feature.reshape(b, groups, c // groups, h, w)

    taps = []
    for tap in range(k):
        ky = tap // kw - kh // 2
        kx = tap % kw - kw // 2
        py = grid_y + ky + off[:, :, tap, 0]
        px = grid_x + kx + off[:, :, tap, 1]
        taps.append(_border_sample(grouped, py, px).reshape(b, c, h, w))
    cols = torch.stack(taps, dim=2)

    out = torch.einsum("ock,bckhw->bohw", weight.reshape(c_out, c_in, k), cols)
    if bias is not None:
        out = out + bias.view(1, -1, 1, 1)
    return out


class DeformableConv2d(nn.Module):
    """3x3 (by default) deformable convolution taking an external offset field."""

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int = 3):
        super().__init__()
        ref = nn.Conv2d(in_channels, out_channels, kernel_size)
        self.weight = nn.Parameter(ref.weight.detach().clone())
        self.bias = nn.Parameter(ref.bias.detach().clone())

    def forward(self, feature, offset):
        return deform_conv2d(feature, offset, self.weight, self.bias)


class OffsetPredictor(nn.Module):
    """Computes a deformable offset field from a (neighbor, reference) pair.

    At the coarsest stage the field is a single convolution of the
    concatenated pair. At finer stages the pair convolution is merged with
    the upscaled previous-stage field through a second convolution. The
    output convolution is zero-initialized so training starts from identity
    alignment, and offsets are clamped to +-max(H, W)/2.
    """

    def __init__(
        self,
        channels: int,
        kernel_size: int = 3,
        deform_groups: int | None = None,
        prev_deform_groups: int | None = None,
    ):
        super().__init__()
        self.deform_groups = deform_groups or default_deform_groups(channels)
        self.offset_channels = 2 * kernel_size * kernel_size * self.deform_groups
        self.conv_pair = nn.Conv2d(2 * channels, self.offset_channels, 3, padding=1)
        if prev_deform_groups is None:
            self.conv_merge = None
            nn.init.zeros_(self.conv_pair.weight)
            nn.init.zeros_(self.conv_pair.bias)
        else:
            prev_channels = 2 * kernel_size * kernel_size * prev_deform_groups
            self.conv_merge = nn.Conv2d(
                self.offset_channels + prev_channels, self.offset_channels, 3, padding=1
            )
            nn.init.zeros_(self.conv_merge.weight)
            nn.init.zeros_(self.conv_merge.bias)

    def forward(self, neighbor, reference, prev_offset=None):
        if neighbor.shape != reference.shape:
            raise ShapeError(
                f"neighbor {tuple(neighbor.shape)} vs reference {tuple(reference.shape)}"
            )
        h, w = neighbor.shape[-2:]
        out = self.conv_pair(torch.cat([neighbor, reference], dim=1))
        if self.conv_merge is not None:
            if prev_offset is None:
                raise ShapeError("this predictor requires a previous-stage offset field")
            if prev_offset.shape[-2:] != (h // 2, w // 2):
                raise ShapeError(
                    f"previous offset {tuple(prev_offset.shape[-2:])} is not half of ({h}, {w})"
                )
            up = upscale_offset(prev_offset, 2)
            out = self.conv_merge(torch.cat([out, up], dim=1))
        elif prev_offset is not None:
            raise ShapeError("this predictor was built without a previous-stage input")
        limit = max(h, w) / 2
        return out.clamp(-limit, limit)


class FeatureFusion(nn.Module):
    """Concatenate same-shape feature maps and project back to one width."""

    def __init__(self, channels: int, n_inputs: int):
        super().__init__()
        self.conv = nn.Conv2d(n_inputs * channels, channels, 1)

    def forward(self, *features):
        ref_shape = features[0].shape[-2:]
        for f in features[1:]:
            if f.shape[-2:] != ref_shape:
                raise ShapeError(
                    f"fusion inputs disagree: {ref_shape} vs {tuple(f.shape[-2:])}"
                )
        return self.conv(torch.cat(features, dim=1))


class PostAlignModule(nn.Module):
    """One decoder stage of post alignment: offsets, alignment, fusion.

    Aligns the two neighbor-frame features against the reference-frame
    feature and fuses them with the decoder stream (and, when present, the
    encoder skip). ``align_target`` chooses which features the deformable
    convolution resamples: "neighbor" (default) warps each neighbor toward
    the reference; "reference" resamples the reference-path features instead.
    """

    def __init__(
        self,
        channels: int,
        kernel_size: int = 3,
        deform_groups: int | None = None,
        prev_deform_groups: int | None = None,
        with_skip: bool = True,
        align_target: str = "neighbor",
    ):
        super().__init__()
        if align_target not in ("neighbor", "reference"):
            raise ShapeError(f"unknown align_target {align_target!r}")
        self.align_target = align_target
        groups = deform_groups or default_deform_groups(channels)
        self.offset_prev = OffsetPredictor(channels, kernel_size, groups, prev_deform_groups)
        self.offset_next = OffsetPredictor(channels, kernel_size, groups, prev_deform_groups)
        self.align_prev = DeformableConv2d(channels, channels, kernel_size)
        self.align_next = DeformableConv2d(channels, channels, kernel_size)
        self.fuse = FeatureFusion(channels, n_inputs=4 if with_skip else 3)

    @property
    def deform_groups(self) -> int:
        return self.offset_prev.deform_groups

    def forward(
        self,
        decoder_in,
        feat_prev,
        feat_ref,
        feat_next,
        skip=None,
        prev_offsets=None,
    ):
        """Returns (fused feature, (offset_prev, offset_next))."""
        po_prev, po_next = prev_offsets if prev_offsets is not None else (None, None)
        off_prev = self.offset_prev(feat_prev, feat_ref, po_prev)
        off_next = self.offset_next(feat_next, feat_ref, po_next)
        src_prev = feat_prev if self.align_target == "neighbor" else feat_ref
        src_next = feat_next if self.align_target == "neighbor" else feat_ref
        aligned_prev = self.align_prev(src_prev, off_prev)
        aligned_next = self.align_next(src_next, off_next)
        inputs = [decoder_in, aligned_prev, aligned_next]
        if skip is not None:
            inputs.append(skip)
        return self.fuse(*inputs), (off_prev, off_next)
