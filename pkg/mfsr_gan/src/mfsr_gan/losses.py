"""Training losses and the learning-rate schedule.

The adversarial terms use a relativistic average discriminator: samples are
scored against the mean score of the opposite class, D(x, x') =
sigmoid(C(x) - E[C(x')]). Both losses are evaluated through logsigmoid so
extreme logits stay finite.

SSIM/MS-SSIM match the data engine's metric conventions — Rec.601 luma,
11x11 Gaussian window (sigma 1.5), 'valid' windows, K1=0.01/K2=0.03, 2x2
average pooling between scales, contrast terms clamped at zero, and weight
renormalisation when the image only supports fewer scales — but run on
tensors with gradients.
"""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F

MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)

_REC601 = (0.299, 0.587, 0.114)


def discriminator_loss(real_logits: torch.Tensor, fake_logits: torch.Tensor) -> torch.Tensor:
    """Push real scores above the average fake and fake scores below the
    average real. At indistinguishable logits this equals 2*ln(2)."""
    rf = real_logits - fake_logits.mean()
    fr = fake_logits - real_logits.mean()
    return -(F.logsigmoid(rf).mean() + F.logsigmoid(-fr).mean())


def generator_loss(real_logits: torch.Tensor, fake_logits: torch.Tensor) -> torch.Tensor:
    """Mirror image of discriminator_loss: reward fakes that outscore the
    average real."""
    rf = real_logits - fake_logits.mean()
    fr = fake_logits - real_logits.mean()
    return -(F.logsigmoid(-rf).mean() + F.logsigmoid(fr).mean())


def cosine_lr(step: int, total_steps: int, lr_max: float, lr_min: float) -> float:
    """Cosine annealing from lr_max at step 0 to lr_min at the last step."""
    if total_steps <= 1:
        return lr_max
    t = min(max(step, 0), total_steps - 1) / (total_steps - 1)
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + math.cos(math.pi * t))


# ---------------------------------------------------------------------------
# differentiable SSIM / MS-SSIM
# ---------------------------------------------------------------------------


def _gaussian_kernel(size: int, sigma: float, dtype, device) -> torch.Tensor:
    r = torch.arange(size, dtype=dtype, device=device) - (size - 1) / 2.0
    g = torch.exp(-(r * r) / (2.0 * sigma * sigma))
    k = torch.outer(g, g)
    return (k / k.sum()).reshape(1, 1, size, size)


def _luma(x: torch.Tensor) -> torch.Tensor:
    """(N, 3, H, W) -> (N, 1, H, W); (N, 1, H, W) passes through."""
    if x.ndim != 4:
        raise ValueError(f"expected (N, C, H, W), got shape {tuple(x.shape)}")
    if x.shape[1] == 1:
        return x
    if x.shape[1] != 3:
        raise ValueError(f"expected 1 or 3 channels, got {x.shape[1]}")
    w = x.new_tensor(_REC601).reshape(1, 3, 1, 1)
    return (x * w).sum(dim=1, keepdim=True)


def _ssim_maps(x, y, kernel, peak, k1, k2):
    c1 = (k1 * peak) ** 2
    c2 = (k2 * peak) ** 2
    mu_x = F.conv2d(x, kernel)
    mu_y = F.conv2d(y, kernel)
    var_x = F.conv2d(x * x, kernel) - mu_x * mu_x
    var_y = F.conv2d(y * y, kernel) - mu_y * mu_y
    cov = F.conv2d(x * y, kernel) - mu_x * mu_y
    lum = (2.0 * mu_x * mu_y + c1) / (mu_x * mu_x + mu_y * mu_y + c1)
    cs = (2.0 * cov + c2) / (var_x + var_y + c2)
    return lum, cs


def ssim(
    pred: torch.Tensor,
    ref: torch.Tensor,
    peak: float = 1.0,
    window_size: int = 11,
    sigma: float = 1.5,
    k1: float = 0.01,
    k2: float = 0.03,
) -> torch.Tensor:
    """Mean SSIM over the batch, differentiable. Inputs (N, C, H, W)."""
    x, y = _luma(pred), _luma(ref)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {tuple(x.shape)} vs {tuple(y.shape)}")
    kernel = _gaussian_kernel(window_size, sigma, x.dtype, x.device)
    lum, cs = _ssim_maps(x, y, kernel, peak, k1, k2)
    return (lum * cs).mean()


def _avg_pool_2x(x: torch.Tensor) -> torch.Tensor:
    h2, w2 = x.shape[-2] // 2, x.shape[-1] // 2
    return F.avg_pool2d(x[..., : 2 * h2, : 2 * w2], 2)


def ms_ssim(
    pred: torch.Tensor,
    ref: torch.Tensor,
    peak: float = 1.0,
    weights=None,
    window_size: int = 11,
    sigma: float = 1.5,
    k1: float = 0.01,
    k2: float = 0.03,
) -> torch.Tensor:
    """Multi-scale SSIM over the batch, differentiable; in [0, 1]."""
    x, y = _luma(pred), _luma(ref)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {tuple(x.shape)} vs {tuple(y.shape)}")
    weights = tuple(MS_SSIM_WEIGHTS if weights is None else weights)

    min_dim = min(x.shape[-2:])
    if min_dim < window_size:
        raise ValueError(
            f"image {x.shape[-1]}x{x.shape[-2]} is smaller than the metric window"
        )
    scales = len(weights)
    while scales > 1 and (min_dim >> (scales - 1)) < window_size:
        scales -= 1
    used = torch.tensor(weights[:scales], dtype=x.dtype, device=x.device)
    used = used / used.sum()

    kernel = _gaussian_kernel(window_size, sigma, x.dtype, x.device)
    score = x.new_tensor(1.0)
    for level in range(scales):
        lum, cs = _ssim_maps(x, y, kernel, peak, k1, k2)
        if level < scales - 1:
            term = cs.mean().clamp_min(0.0)
            x, y = _avg_pool_2x(x), _avg_pool_2x(y)
        else:
            term = (lum * cs).mean().clamp_min(0.0)
        score = score * term ** used[level]
    return score
