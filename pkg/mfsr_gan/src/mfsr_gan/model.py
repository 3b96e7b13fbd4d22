"""Burst super-resolution generator and discriminator.

Pipeline: packed Bayer burst -> demosaic (fixed nearest-neighbour, see
``data``) -> shared encoder at three scales -> per-frame residuals against
the base frame -> coarse-to-fine deformable alignment with a ghosting skip
-> per-frame attention -> cross-frame fusion -> RRDB reconstruction with a
final 2x nearest-neighbour upsample. Net scale factor from packed input to
RGB output is 4 (2x from unpacking the CFA, 2x super-resolution).

Frame index 0 is always the base/reference frame; it is never warped by the
aligner and every residual is taken against it.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn
from torchvision.ops import deform_conv2d

from mfsr_gan.data import nn_demosaic_torch, unpack_torch

LEAKY_SLOPE = 0.2


class ChannelWeights(nn.Module):
    """Squeeze-and-excitation gate: global average pool -> two 1x1 convs ->
    sigmoid, giving one weight in (0, 1) per channel."""

    def __init__(self, channels: int, reduction: int = 4):
        super().__init__()
        hidden = max(channels // reduction, 4)
        self.fc1 = nn.Conv2d(channels, hidden, 1)
        self.fc2 = nn.Conv2d(hidden, channels, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        w = x.mean(dim=(-2, -1), keepdim=True)
        w = self.fc2(F.relu(self.fc1(w)))
        return torch.sigmoid(w)


class ChannelAttention(nn.Module):
    """x * ChannelWeights(x)."""

    def __init__(self, channels: int, reduction: int = 4):
        super().__init__()
        self.weights = ChannelWeights(channels, reduction)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x * self.weights(x)


class SimpleGate(nn.Module):
    """Split channels in half, multiply the halves."""

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        a, b = x.chunk(2, dim=1)
        return a * b


class GatedFeedForward(nn.Module):
    """1x1 expand -> depthwise 3x3 -> gated halves -> 1x1 project."""

    def __init__(self, channels: int, expansion: int = 2):
        super().__init__()
        inner = channels * expansion
        self.proj_in = nn.Conv2d(channels, inner * 2, 1)
        self.dwconv = nn.Conv2d(inner * 2, inner * 2, 3, padding=1, groups=inner * 2)
        self.proj_out = nn.Conv2d(inner, channels, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        a, b = self.dwconv(self.proj_in(x)).chunk(2, dim=1)
        return self.proj_out(F.gelu(a) * b)


class MultiFrameAttention(nn.Module):
    """Per-frame refinement: a gated conv produces channel weights that scale
    the module input, then a gated feedforward adds a residual correction.
    With the weights saturated at 1 and the feedforward zeroed the module is
    the identity."""

    def __init__(self, channels: int):
        super().__init__()
        self.gate_conv = nn.Conv2d(channels, channels * 2, 3, padding=1)
        self.gate = SimpleGate()
        self.weights = ChannelWeights(channels)
        self.feedforward = GatedFeedForward(channels)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        w = self.weights(self.gate(self.gate_conv(x)))
        y = x * w
        return y + self.feedforward(y)


def rdc(stack: torch.Tensor) -> torch.Tensor:
    """Reference differences: (N, F, C, H, W) -> same shape with the base
    frame passed through and every other frame replaced by its residual
    against the base."""
    if stack.shape[1] == 1:
        return stack
    base = stack[:, :1]
    return torch.cat([base, stack[:, 1:] - base], dim=1)


class DeformableAligner(nn.Module):
    """Aligns non-base residual features with a 3x3 deformable convolution.

    Offsets are predicted by one conv over the frame's residual features
    concatenated with the (upsampled, doubled) offsets propagated from the
    next-coarser scale; zeros stand in at the coarsest scale. After the
    deformable conv, the base-frame features are added back onto every
    non-base frame (ghosting skip), and the base frame itself passes through
    untouched.
    """

    KERNEL = 3

    def __init__(self, channels: int):
        super().__init__()
        n_off = 2 * self.KERNEL * self.KERNEL
        self.offset_conv = nn.Conv2d(channels + n_off, n_off, 3, padding=1)
        self.weight = nn.Parameter(torch.empty(channels, channels, self.KERNEL, self.KERNEL))
        self.bias = nn.Parameter(torch.zeros(channels))
        nn.init.kaiming_uniform_(self.weight, a=LEAKY_SLOPE)

    def forward(self, residuals: torch.Tensor, coarser_offsets: torch.Tensor | None):
        n, f, c, h, w = residuals.shape
        n_off = 2 * self.KERNEL * self.KERNEL
        flat = residuals.reshape(n * f, c, h, w)
        if coarser_offsets is None:
            prev = flat.new_zeros(n * f, n_off, h, w)
        else:
            prev = coarser_offsets.reshape(n * f, n_off, h // 2, w // 2)
            # coordinates double when the grid does
            prev = 2.0 * F.interpolate(prev, scale_factor=2, mode="bilinear", align_corners=False)
        offsets = self.offset_conv(torch.cat([flat, prev], dim=1))
        aligned = deform_conv2d(
            flat, offsets, self.weight, self.bias, padding=self.KERNEL // 2
        ).reshape(n, f, c, h, w)
        base = residuals[:, :1]
        aligned = torch.cat([base, aligned[:, 1:] + base], dim=1)
        return aligned, offsets.reshape(n, f, n_off, h, w)


class FeatureEnrichment(nn.Module):
    """Fuse the aligned burst: concatenate frames along channels, apply
    channel attention with a long skip, project back to one frame's width."""

    def __init__(self, channels: int, frames: int):
        super().__init__()
        self.frames = frames
        self.attention = ChannelAttention(channels * frames)
        self.project = nn.Conv2d(channels * frames, channels, 3, padding=1)

    def forward(self, stack: torch.Tensor) -> torch.Tensor:
        n, f, c, h, w = stack.shape
        if f != self.frames:
            raise ValueError(f"expected {self.frames} frames, got {f}")
        cat = stack.reshape(n, f * c, h, w)
        return self.project(self.attention(cat) + cat)


class DenseBlock(nn.Module):
    """Five 3x3 convs, each seeing the block input plus all previous layer
    outputs; leaky-ReLU between layers, linear final projection, residual."""

    def __init__(self, channels: int, growth: int):
        super().__init__()
        self.convs = nn.ModuleList(
            nn.Conv2d(channels + i * growth, growth if i < 4 else channels, 3, padding=1)
            for i in range(5)
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        feats = [x]
        for conv in self.convs[:-1]:
            feats.append(F.leaky_relu(conv(torch.cat(feats, dim=1)), LEAKY_SLOPE))
        return x + self.convs[-1](torch.cat(feats, dim=1))


class RRDB(nn.Module):
    """Residual-in-residual dense block: three chained dense blocks, with the
    chain's net change scaled by gamma — out = x + gamma * (chain(x) - x).
    Zero weights give an exact identity; (out - x) is linear in gamma."""

    def __init__(self, channels: int, growth: int, gamma: float = 0.2):
        super().__init__()
        self.gamma = gamma
        self.blocks = nn.Sequential(
            DenseBlock(channels, growth),
            DenseBlock(channels, growth),
            DenseBlock(channels, growth),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.gamma * (self.blocks(x) - x)


class Reconstructor(nn.Module):
    """RRDB trunk then 2x nearest-neighbour upsample + convs to RGB."""

    def __init__(self, channels: int, growth: int, num_rrdb: int = 3, gamma: float = 0.2):
        super().__init__()
        self.trunk = nn.Sequential(*(RRDB(channels, growth, gamma) for _ in range(num_rrdb)))
        self.up_conv = nn.Conv2d(channels, channels, 3, padding=1)
        self.out_conv = nn.Conv2d(channels, 3, 3, padding=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        y = self.trunk(x)
        y = F.interpolate(y, scale_factor=2, mode="nearest")
        return self.out_conv(F.leaky_relu(self.up_conv(y), LEAKY_SLOPE))


class Encoder(nn.Module):
    """Shared per-frame feature pyramid at scales 1, 1/2, 1/4."""

    def __init__(self, channels: int):
        super().__init__()
        self.conv_in = nn.Conv2d(3, channels, 3, padding=1)
        self.down1 = nn.Conv2d(channels, channels, 3, stride=2, padding=1)
        self.down2 = nn.Conv2d(channels, channels, 3, stride=2, padding=1)

    def forward(self, rgb: torch.Tensor):
        s0 = F.leaky_relu(self.conv_in(rgb), LEAKY_SLOPE)
        s1 = F.leaky_relu(self.down1(s0), LEAKY_SLOPE)
        s2 = F.leaky_relu(self.down2(s1), LEAKY_SLOPE)
        return s0, s1, s2


class Generator(nn.Module):
    """(N, F, 4, h, w) packed burst -> (N, 3, 4h, 4w) RGB."""

    def __init__(
        self,
        channels: int = 64,
        growth: int = 32,
        frames: int = 8,
        num_rrdb: int = 3,
        cfa: str = "RGGB",
    ):
        super().__init__()
        self.frames = frames
        self.cfa = cfa
        self.encoder = Encoder(channels)
        self.align2 = DeformableAligner(channels)
        self.align1 = DeformableAligner(channels)
        self.align0 = DeformableAligner(channels)
        self.attention = MultiFrameAttention(channels)
        self.enrichment = FeatureEnrichment(channels, frames)
        self.reconstructor = Reconstructor(channels, growth, num_rrdb)

    def demosaic(self, frames: torch.Tensor) -> torch.Tensor:
        """(N, F, 4, h, w) -> (N, F, 3, 2h, 2w); fixed, not learned."""
        return nn_demosaic_torch(unpack_torch(frames, self.cfa), self.cfa)

    def forward(self, frames: torch.Tensor) -> torch.Tensor:
        n, f = frames.shape[:2]
        if f != self.frames:
            raise ValueError(f"model built for {self.frames} frames, got {f}")
        rgb = self.demosaic(frames)
        s0, s1, s2 = self.encoder(rgb.reshape((n * f,) + rgb.shape[2:]))
        unflatten = lambda s: s.reshape((n, f) + s.shape[1:])
        r0, r1, r2 = rdc(unflatten(s0)), rdc(unflatten(s1)), rdc(unflatten(s2))

        _, off2 = self.align2(r2, None)
        _, off1 = self.align1(r1, off2)
        aligned, _ = self.align0(r0, off1)

        refined = self.attention(aligned.reshape((n * f,) + aligned.shape[2:]))
        fused = self.enrichment(refined.reshape((n, f) + refined.shape[1:]))
        return self.reconstructor(fused)


class Discriminator(nn.Module):
    """Strided-conv classifier emitting one logit per image; depth is the
    number of 2x downsampling stages."""

    def __init__(self, channels: int = 64, depth: int = 3, max_channels: int = 256):
        super().__init__()
        layers = [nn.Conv2d(3, channels, 3, padding=1), nn.LeakyReLU(LEAKY_SLOPE)]
        width = channels
        for _ in range(depth):
            out = min(width * 2, max_channels)
            layers += [nn.Conv2d(width, out, 3, stride=2, padding=1), nn.LeakyReLU(LEAKY_SLOPE)]
            width = out
        self.features = nn.Sequential(*layers)
        self.head = nn.Linear(width, 1)

    def forward(self, rgb: torch.Tensor) -> torch.Tensor:
        y = self.features(rgb).mean(dim=(-2, -1))
        return self.head(y).squeeze(-1)
