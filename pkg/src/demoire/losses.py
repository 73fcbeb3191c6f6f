"""Training objectives: spatial, perceptual, and frequency-domain terms.

All terms are mean-reduced L1 distances so the combination weights are
resolution-independent. The spatial and perceptual terms sum over the
model's output scales (full, x1/2, x1/4); the frequency term compares
amplitude and phase spectra at full resolution only.

Phase distances are wrapped into (-pi, pi] before the absolute value, so a
pair of phases just either side of the +-pi cut scores a small distance
rather than nearly 2*pi. Pass ``raw_phase_l1=True`` for the unwrapped
variant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ConfigurationError, ShapeError
from .frequency import decompose


@dataclass
class LossWeights:
    """Combination weights for the perceptual and frequency terms."""

    lambda_p: float = 0.1
    lambda_f: float = 0.1

    def validate(self) -> None:
        if self.lambda_p < 0 or self.lambda_f < 0:
            raise ConfigurationError(
                f"loss weights must be non-negative, got {self.lambda_p}, {self.lambda_f}"
            )


def _as_scale_list(x) -> list[torch.Tensor]:
    if isinstance(x, torch.Tensor):
        return [x]
    return list(x)


def multi_scale_targets(target: torch.Tensor, preds: Sequence[torch.Tensor]) -> list[torch.Tensor]:
    """Downsample the full-resolution target to each prediction's size."""
    out = []
    for p in preds:
        if p.shape[-2:] == target.shape[-2:]:
            out.append(target)
        else:
            out.append(
                F.interpolate(target, size=p.shape[-2:], mode="bilinear", align_corners=False)
            )
    return out


def spatial_loss(preds, targets) -> torch.Tensor:
    """Sum over scales of mean |pred - target|."""
    preds = _as_scale_list(preds)
    targets = _as_scale_list(targets)
    if len(preds) != len(targets):
        raise ShapeError(f"{len(preds)} predictions vs {len(targets)} targets")
    total = None
    for p, t in zip(preds, targets):
        if p.shape != t.shape:
            raise ShapeError(f"scale mismatch: {tuple(p.shape)} vs {tuple(t.shape)}")
        term = (p - t).abs().mean()
        total = term if total is None else total + term
    return total


def _check_frozen(extractor) -> None:
    if isinstance(extractor, nn.Module):
        for name, p in extractor.named_parameters():
            if p.requires_grad:
                raise ConfigurationError(
                    f"perceptual extractor must be frozen; {name} requires grad"
                )


def perceptual_loss(preds, targets, extractor: Callable) -> torch.Tensor:
    """Sum over scales and tap layers of mean |taps(pred) - taps(target)|."""
    _check_frozen(extractor)
    preds = _as_scale_list(preds)
    targets = _as_scale_list(targets)
    if len(preds) != len(targets):
        raise ShapeError(f"{len(preds)} predictions vs {len(targets)} targets")
    total = None
    for p, t in zip(preds, targets):
        if p.shape != t.shape:
            raise ShapeError(f"scale mismatch: {tuple(p.shape)} vs {tuple(t.shape)}")
        taps_p = extractor(p)
        with torch.no_grad():
            taps_t = extractor(t)
        taps_p = _as_scale_list(taps_p)
        taps_t = _as_scale_list(taps_t)
        for fp, ft in zip(taps_p, taps_t):
            term = (fp - ft).abs().mean()
            total = term if total is None else total + term
    return total


def wrap_phase(delta: torch.Tensor) -> torch.Tensor:
    """Map phase differences into (-pi, pi]."""
    return math.pi - torch.remainder(math.pi - delta, 2 * math.pi)


def frequency_loss(pred: torch.Tensor, target: torch.Tensor, raw_phase_l1: bool = False) -> torch.Tensor:
    """Mean |amplitude difference| + mean |phase difference| of the spectra."""
    if pred.shape != target.shape:
        raise ShapeError(f"{tuple(pred.shape)} vs {tuple(target.shape)}")
    sp = decompose(pred)
    st = decompose(target)
    amp_term = (sp.amplitude - st.amplitude).abs().mean()
    delta = sp.phase - st.phase
    if not raw_phase_l1:
        delta = wrap_phase(delta)
    return amp_term + delta.abs().mean()


def total_loss(
    preds,
    target: torch.Tensor,
    weights: LossWeights,
    extractor: Callable,
    raw_phase_l1: bool = False,
) -> tuple[torch.Tensor, dict]:
    """Weighted combination; returns (scalar with graph, float breakdown).

    ``preds`` is the model's output list ordered full resolution first;
    ``target`` is the full-resolution clean frame, downsampled here for the
    auxiliary scales.
    """
    weights.validate()
    preds = _as_scale_list(preds)
    targets = multi_scale_targets(target, preds)
    l_s = spatial_loss(preds, targets)
    total = l_s
    breakdown = {"spatial": float(l_s.detach())}
    if weights.lambda_p > 0:
        l_p = perceptual_loss(preds, targets, extractor)
        total = total + weights.lambda_p * l_p
        breakdown["perceptual"] = float(l_p.detach())
    else:
        breakdown["perceptual"] = 0.0
    if weights.lambda_f > 0:
        l_f = frequency_loss(preds[0], targets[0], raw_phase_l1=raw_phase_l1)
        total = total + weights.lambda_f * l_f
        breakdown["frequency"] = float(l_f.detach())
    else:
        breakdown["frequency"] = 0.0
    breakdown["total"] = float(total.detach())
    return total, breakdown
