"""Feature-similarity score from phase congruency and gradient magnitude.

Implemented from the metric's defining formula. Filter-bank parameters are
not standardized anywhere in this codebase's inputs, so they are pinned here
and documented:

- phase congruency: 4 scales x 4 orientations of log-Gabor filters,
  smallest wavelength 6 px, scale multiplier 2, sigmaOnf 0.55, angular
  sigma pi/4/1.2, noise threshold mean + 2 sigma (Rayleigh estimate from
  the smallest scale, rescaled by 1/1.7), low-pass cutoff 0.45 order 15;
- gradients: Scharr kernels [[3,0,-3],[10,0,-10],[3,0,-3]]/16 on 0..255
  luminance;
- similarity constants T1 = 0.85 (phase congruency), T2 = 160 (gradient);
- images with min(H, W) > ~256 are average-pooled down by
  round(min(H, W)/256) first.

Scores are in [0, 1]; identical inputs score 1.
"""

from __future__ import annotations

import math

import torch

from .errors import ShapeError

_NSCALE = 4
_NORIENT = 4
_MIN_WAVELENGTH = 6.0
_MULT = 2.0
_SIGMA_ON_F = 0.55
_D_THETA_ON_SIGMA = 1.2
_NOISE_K = 2.0
_EPS = 1e-4
_T1 = 0.85
_T2 = 160.0

_SCHARR_X = torch.tensor(
    [[3.0, 0.0, -3.0], [10.0, 0.0, -10.0], [3.0, 0.0, -3.0]], dtype=torch.float64
) / 16.0


def _log_gabor_bank(rows: int, cols: int) -> list[list[torch.Tensor]]:
    """Per-(scale, orientation) frequency-domain filters, unshifted layout."""
    fy = torch.fft.fftfreq(rows, dtype=torch.float64).view(rows, 1)
    fx = torch.fft.fftfreq(cols, dtype=torch.float64).view(1, cols)
    radius = torch.sqrt(fx * fx + fy * fy)
    lowpass = 1.0 / (1.0 + (radius / 0.45) ** 30)
    radius = radius.clone()
    radius[0, 0] = 1.0
    theta = torch.atan2(-fy, fx).expand(rows, cols)
    sin_t, cos_t = torch.sin(theta), torch.cos(theta)

    radial = []
    log_sigma = math.log(_SIGMA_ON_F)
    for s in range(_NSCALE):
        wavelength = _MIN_WAVELENGTH * _MULT**s
        lg = torch.exp(-(torch.log(radius * wavelength) ** 2) / (2 * log_sigma**2))
        lg = lg * lowpass
        lg[0, 0] = 0.0
        radial.append(lg)

    theta_sigma = math.pi / _NORIENT / _D_THETA_ON_SIGMA
    bank = []
    for o in range(_NORIENT):
        angle = o * math.pi / _NORIENT
        ds = sin_t * math.cos(angle) - cos_t * math.sin(angle)
        dc = cos_t * math.cos(angle) + sin_t * math.sin(angle)
        dtheta = torch.abs(torch.atan2(ds, dc))
        spread = torch.exp(-(dtheta**2) / (2 * theta_sigma**2))
        bank.append([lg * spread for lg in radial])
    return bank


def phase_congruency(im: torch.Tensor) -> torch.Tensor:
    """Phase-congruency map of a 2-D image, values in [0, 1]."""
    if im.dim() != 2:
        raise ShapeError(f"expected a 2-D image, got {tuple(im.shape)}")
    im = im.to(torch.float64)
    rows, cols = im.shape
    spectrum = torch.fft.fft2(im)
    bank = _log_gabor_bank(rows, cols)

    energy_all = torch.zeros(rows, cols, dtype=torch.float64)
    an_all = torch.zeros(rows, cols, dtype=torch.float64)
    for filters in bank:
        responses = [torch.fft.ifft2(spectrum * filt) for filt in filters]
        amps = [resp.abs() for resp in responses]
        sum_e = sum(resp.real for resp in responses)
        sum_o = sum(resp.imag for resp in responses)
        sum_an = sum(amps)

        x_energy = torch.sqrt(sum_e**2 + sum_o**2) + _EPS
        mean_e = sum_e / x_energy
        mean_o = sum_o / x_energy
        energy = torch.zeros_like(sum_e)
        for resp in responses:
            energy = energy + resp.real * mean_e + resp.imag * mean_o
            energy = energy - torch.abs(resp.real * mean_o - resp.imag * mean_e)

        # Rayleigh noise estimate from the smallest-scale amplitudes
        tau = torch.quantile(amps[0], 0.5) / math.sqrt(math.log(4.0))
        total_tau = tau * (1 - (1 / _MULT) ** _NSCALE) / (1 - 1 / _MULT)
        noise_mean = total_tau * math.sqrt(math.pi / 2)
        noise_sigma = total_tau * math.sqrt((4 - math.pi) / 2)
        threshold = (noise_mean + _NOISE_K * noise_sigma) / 1.7
        energy = torch.clamp(energy - threshold, min=0.0)

        energy_all = energy_all + energy
        an_all = an_all + sum_an
    return energy_all / (an_all + _EPS)


def _to_luminance(img: torch.Tensor) -> torch.Tensor:
    """RGB or grayscale in [0, 1] to a 0..255 luminance plane."""
    if img.dim() == 3:
        if img.shape[0] == 3:
            r, g, b = img[0], img[1], img[2]
            img = 0.299 * r + 0.587 * g + 0.114 * b
        elif img.shape[0] == 1:
            img = img[0]
        else:
            raise ShapeError(f"expected 1 or 3 channels, got {img.shape[0]}")
    if img.dim() != 2:
        raise ShapeError(f"expected (H, W) or (C, H, W), got {tuple(img.shape)}")
    return img.to(torch.float64) * 255.0


def _gradient_magnitude(im: torch.Tensor) -> torch.Tensor:
    kx = _SCHARR_X.view(1, 1, 3, 3)
    ky = _SCHARR_X.t().contiguous().view(1, 1, 3, 3)
    x = im.view(1, 1, *im.shape)
    gx = torch.nn.functional.conv2d(x, kx, padding=1)
    gy = torch.nn.functional.conv2d(x, ky, padding=1)
    return torch.sqrt(gx**2 + gy**2)[0, 0]


def fsim(a: torch.Tensor, b: torch.Tensor) -> float:
    """Feature similarity between two images in [0, 1]; returns [0, 1]."""
    if a.shape != b.shape:
        raise ShapeError(f"{tuple(a.shape)} vs {tuple(b.shape)}")
    la = _to_luminance(torch.as_tensor(a))
    lb = _to_luminance(torch.as_tensor(b))

    factor = max(1, round(min(la.shape) / 256))
    if factor > 1:
        la = torch.nn.functional.avg_pool2d(la.view(1, 1, *la.shape), factor)[0, 0]
        lb = torch.nn.functional.avg_pool2d(lb.view(1, 1, *lb.shape), factor)[0, 0]

    pc_a = phase_congruency(la)
    pc_b = phase_congruency(lb)
    g_a = _gradient_magnitude(la)
    g_b = _gradient_magnitude(lb)

    s_pc = (2 * pc_a * pc_b + _T1) / (pc_a**2 + pc_b**2 + _T1)
    s_g = (2 * g_a * g_b + _T2) / (g_a**2 + g_b**2 + _T2)
    pc_max = torch.maximum(pc_a, pc_b)
    score = (s_pc * s_g * pc_max).sum() / (pc_max.sum() + 1e-12)
    return float(score)
