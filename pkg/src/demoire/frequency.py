"""Differentiable 2-D frequency-domain primitives.

Feature maps are real tensors of shape (B, C, H, W). Their spectra are stored
in half-plane (Hermitian) form: only the first ``W // 2 + 1`` columns of the
full DFT are kept, split into an amplitude plane and a phase plane. The DFT
convention is the unnormalized forward transform with the 1/(H*W) factor on
the inverse (torch's "backward" norm), so the DC bin of a constant image with
value c is H*W*c.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .errors import InvalidInputError, ShapeError

# Stabilizer for the amplitude/phase backward passes. The forward values are
# exact; only the gradient denominators are biased, which pins the gradient to
# 0 at zero-amplitude bins instead of producing NaN/inf.
_POLAR_EPS = 1e-12


class _StableAmplitude(torch.autograd.Function):
    @staticmethod
    def forward(ctx, re, im):
        amp = torch.sqrt(re * re + im * im)
        ctx.save_for_backward(re, im)
        return amp

    @staticmethod
    def backward(ctx, grad):
        re, im = ctx.saved_tensors
        denom = torch.sqrt(re * re + im * im + _POLAR_EPS)
        return grad * re / denom, grad * im / denom


class _StablePhase(torch.autograd.Function):
    @staticmethod
    def forward(ctx, re, im):
        ctx.save_for_backward(re, im)
        return torch.atan2(im, re)

    @staticmethod
    def backward(ctx, grad):
        re, im = ctx.saved_tensors
        denom = re * re + im * im + _POLAR_EPS
        return grad * (-im) / denom, grad * re / denom


@dataclass
class Spectrum:
    """Half-plane spectrum of a real (B, C, H, W) tensor.

    amplitude: (B, C, H, W//2 + 1), non-negative
    phase:     (B, C, H, W//2 + 1), radians in (-pi, pi]
    source_width: W of the spatial tensor, needed to invert the half plane
        (width ``Wh`` corresponds to either W = 2*Wh - 2 or W = 2*Wh - 1)
    """

    amplitude: torch.Tensor
    phase: torch.Tensor
    source_width: int

    @property
    def height(self) -> int:
        return self.amplitude.shape[-2]

    def validate(self) -> None:
        if self.amplitude.shape != self.phase.shape:
            raise ShapeError(
                f"amplitude {tuple(self.amplitude.shape)} and phase "
                f"{tuple(self.phase.shape)} differ"
            )
        if self.source_width // 2 + 1 != self.amplitude.shape[-1]:
            raise ShapeError(
                f"source_width {self.source_width} incompatible with half-plane "
                f"width {self.amplitude.shape[-1]}"
            )
        if torch.any(self.amplitude < 0):
            raise InvalidInputError("negative amplitude")


def decompose(x: torch.Tensor) -> Spectrum:
    """Split a real (B, C, H, W) tensor into half-plane amplitude and phase.

    Differentiable; the gradient of both planes is defined (as 0) at bins
    where the complex coefficient is exactly zero.
    """
    if x.dim() < 2:
        raise ShapeError(f"expected at least 2-D input, got {x.dim()}-D")
    if not torch.isfinite(x).all():
        raise InvalidInputError("non-finite values in input")
    spec = torch.fft.rfft2(x, dim=(-2, -1))
    amp = _StableAmplitude.apply(spec.real, spec.imag)
    phase = _StablePhase.apply(spec.real, spec.imag)
    return Spectrum(amplitude=amp, phase=phase, source_width=x.shape[-1])


def polar_to_spatial(amplitude: torch.Tensor, phase: torch.Tensor, source_width: int) -> torch.Tensor:
    """Inverse transform of per-bin (amplitude, phase) half-plane tensors.

    Unlike :func:`recompose` this does not require amplitude >= 0, so learned
    planes (which may go negative) can be inverted directly.
    """
    if amplitude.shape != phase.shape:
        raise ShapeError(
            f"amplitude {tuple(amplitude.shape)} and phase {tuple(phase.shape)} differ"
        )
    if source_width // 2 + 1 != amplitude.shape[-1]:
        raise ShapeError(
            f"source_width {source_width} incompatible with half-plane width "
            f"{amplitude.shape[-1]}"
        )
    spec = torch.complex(amplitude * torch.cos(phase), amplitude * torch.sin(phase))
    height = amplitude.shape[-2]
    return torch.fft.irfft2(spec, s=(height, source_width), dim=(-2, -1))


def recompose(s: Spectrum) -> torch.Tensor:
    """Invert a half-plane spectrum back to a real (B, C, H, W) tensor."""
    return polar_to_spatial(s.amplitude, s.phase, s.source_width)


def swap_components(amp_source: torch.Tensor, phase_source: torch.Tensor) -> torch.Tensor:
    """Rebuild an image from one input's amplitude and the other's phase."""
    if amp_source.shape != phase_source.shape:
        raise ShapeError(
            f"shape mismatch: {tuple(amp_source.shape)} vs {tuple(phase_source.shape)}"
        )
    amp = decompose(amp_source)
    phase = decompose(phase_source)
    return polar_to_spatial(amp.amplitude, phase.phase, amp.source_width)
