"""Evaluation metrics: fidelity, structure, perceptual and distributional.

Images are tensors in [0, 1], channel-first. Bit-identical pairs score an
infinite dB value, reported as the float('inf') sentinel. Perceptual and
video-distribution scores depend on a pluggable backbone; when the
seeded-random fallback backbone is in use the owning report is labeled
non-comparable to published numbers.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import torch
from scipy.linalg import sqrtm
from scipy.ndimage import gaussian_filter

from .backbones import FrozenFeatureExtractor
from .errors import ConfigurationError, InvalidInputError, ShapeError
from .fsim import fsim

__all__ = [
    "psnr", "ssim", "fsim", "lpips", "fvd", "y_psnr",
    "color_histogram_correlation", "MetricsReport",
]

logger = logging.getLogger(__name__)

_BT601 = (0.299, 0.587, 0.114)


def _to_array(x) -> np.ndarray:
    if isinstance(x, torch.Tensor):
        x = x.detach().cpu().numpy()
    return np.asarray(x, dtype=np.float64)


def psnr(a, b, peak: float = 1.0) -> float:
    """10*log10(peak^2 / MSE) in dB; inf when the images are identical."""
    a, b = _to_array(a), _to_array(b)
    if a.shape != b.shape:
        raise ShapeError(f"{a.shape} vs {b.shape}")
    if peak <= 0:
        raise ConfigurationError(f"peak must be positive, got {peak}")
    mse = np.mean((a - b) ** 2)
    if mse == 0.0:
        return float("inf")
    return float(10.0 * math.log10(peak * peak / mse))


def y_psnr(a, b, peak: float = 1.0) -> float:
    """PSNR restricted to the luminance plane of RGB inputs."""
    a, b = _to_array(a), _to_array(b)
    if a.shape != b.shape:
        raise ShapeError(f"{a.shape} vs {b.shape}")
    if a.ndim != 3 or a.shape[0] != 3:
        raise ShapeError(f"expected (3, H, W) RGB, got {a.shape}")
    w = np.array(_BT601).reshape(3, 1, 1)
    return psnr((a * w).sum(axis=0), (b * w).sum(axis=0), peak=peak)


def _ssim_plane(a: np.ndarray, b: np.ndarray, data_range: float) -> float:
    sigma, truncate = 1.5, 3.5
    pad = int(truncate * sigma + 0.5)  # 11x11 window
    if min(a.shape) < 2 * pad + 1:
        raise ShapeError(
            f"image {a.shape} smaller than the {2 * pad + 1}x{2 * pad + 1} window"
        )

    def filt(x):
        return gaussian_filter(x, sigma=sigma, truncate=truncate, mode="nearest")

    ux, uy = filt(a), filt(b)
    vx = filt(a * a) - ux * ux
    vy = filt(b * b) - uy * uy
    vxy = filt(a * b) - ux * uy
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    s = ((2 * ux * uy + c1) * (2 * vxy + c2)) / ((ux**2 + uy**2 + c1) * (vx + vy + c2))
    return float(s[pad:-pad, pad:-pad].mean())


def ssim(a, b, data_range: float = 1.0) -> float:
    """Mean local structural similarity; grayscale, or averaged per channel.

    Gaussian window sigma 1.5 truncated at 3.5 sigma (11x11), K1 = 0.01,
    K2 = 0.03, border of 5 px excluded from the mean.
    """
    a, b = _to_array(a), _to_array(b)
    if a.shape != b.shape:
        raise ShapeError(f"{a.shape} vs {b.shape}")
    if a.ndim == 2:
        return _ssim_plane(a, b, data_range)
    if a.ndim == 3:
        return float(np.mean([_ssim_plane(a[c], b[c], data_range) for c in range(a.shape[0])]))
    raise ShapeError(f"expected (H, W) or (C, H, W), got {a.shape}")


def lpips(a, b, backbone: FrozenFeatureExtractor) -> float:
    """Perceptual distance: squared L2 between channel-unit-normalized tap
    activations, averaged spatially and across channels (uniform layer
    weights), summed over taps. Symmetric, and 0 for identical inputs."""
    a = torch.as_tensor(a, dtype=torch.float32)
    b = torch.as_tensor(b, dtype=torch.float32)
    if a.shape != b.shape:
        raise ShapeError(f"{tuple(a.shape)} vs {tuple(b.shape)}")
    with torch.no_grad():
        taps_a = backbone(a)
        taps_b = backbone(b)
        dist = 0.0
        for fa, fb in zip(taps_a, taps_b):
            na = fa / torch.sqrt((fa * fa).sum(dim=1, keepdim=True) + 1e-10)
            nb = fb / torch.sqrt((fb * fb).sum(dim=1, keepdim=True) + 1e-10)
            dist = dist + ((na - nb) ** 2).mean(dim=(1, 2, 3))
    return float(dist.mean())


def fvd(set_a, set_b, eps: float = 1e-6) -> float:
    """Frechet distance between Gaussian fits of two embedding sets (N, D)."""
    a, b = _to_array(set_a), _to_array(set_b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ShapeError(f"expected (N, D) embedding sets, got {a.shape} and {b.shape}")
    if a.shape[0] < 2 or b.shape[0] < 2:
        raise InvalidInputError("each embedding set needs at least 2 samples")
    mu_a, mu_b = a.mean(axis=0), b.mean(axis=0)
    cov_a = np.atleast_2d(np.cov(a, rowvar=False))
    cov_b = np.atleast_2d(np.cov(b, rowvar=False))

    covmean = sqrtm(cov_a @ cov_b)
    if not np.isfinite(covmean).all():
        logger.warning("singular covariance product; regularizing with eps=%g", eps)
        offset = np.eye(cov_a.shape[0]) * eps
        covmean = sqrtm((cov_a + offset) @ (cov_b + offset))
    if np.iscomplexobj(covmean):
        covmean = covmean.real
    diff = mu_a - mu_b
    d = float(diff @ diff + np.trace(cov_a + cov_b - 2.0 * covmean))
    return max(d, 0.0)


def color_histogram_correlation(a, b, bins: int = 256) -> float:
    """Mean over channels of the Pearson correlation between per-channel
    histograms on [0, 1]."""
    a, b = _to_array(a), _to_array(b)
    if a.shape != b.shape:
        raise ShapeError(f"{a.shape} vs {b.shape}")
    if a.min() < 0 or a.max() > 1 or b.min() < 0 or b.max() > 1:
        raise InvalidInputError("histogram correlation expects values in [0, 1]")
    if a.ndim == 2:
        a, b = a[None], b[None]
    corrs = []
    for c in range(a.shape[0]):
        ha, _ = np.histogram(a[c], bins=bins, range=(0.0, 1.0))
        hb, _ = np.histogram(b[c], bins=bins, range=(0.0, 1.0))
        ha = ha.astype(np.float64)
        hb = hb.astype(np.float64)
        if ha.std() == 0 or hb.std() == 0:
            logger.warning("degenerate histogram in channel %d; correlation set to 0", c)
            corrs.append(0.0)
        else:
            corrs.append(float(np.corrcoef(ha, hb)[0, 1]))
    return float(np.mean(corrs))


@dataclass
class MetricsReport:
    """Per-frame metric rows plus sequence-level scores and an aggregate.

    ``comparable`` is False when any backbone-dependent score was computed
    with the seeded-random fallback; renderers must then label the report
    as non-comparable to published numbers.
    """

    per_frame: list = field(default_factory=list)
    per_sequence: dict = field(default_factory=dict)
    comparable: bool = True

    def add_frame(self, **values) -> None:
        self.per_frame.append(dict(values))

    NON_METRIC_KEYS = ("sequence", "index")

    def aggregate(self) -> dict:
        """Mean and standard deviation per metric over frames."""
        out = {}
        keys = sorted({
            k for row in self.per_frame for k in row
            if k not in self.NON_METRIC_KEYS and isinstance(row[k], (int, float))
        })
        for k in keys:
            vals = np.array([row[k] for row in self.per_frame if k in row], dtype=np.float64)
            # Infinite sentinels (e.g. PSNR of an exact match) give an
            # infinite mean and an undefined spread without warnings.
            with np.errstate(invalid="ignore"):
                out[k] = (float(vals.mean()), float(vals.std()))
        return out

    def comparability_label(self) -> str:
        if self.comparable:
            return "backbone: pretrained weights"
        return "backbone: seeded-random fallback; non-comparable to published numbers"
