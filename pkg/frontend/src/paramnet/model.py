"""UNet for image-to-image parameter estimation.

Symmetric encoder-bottleneck-decoder with skip connections; GELU activations,
group normalization, no dropout. Input channels equal the replicate count M,
output is always the 3 parameter channels at the input's spatial resolution.
"""

from __future__ import annotations

import torch
import torch.nn as nn

from .errors import ShapeCompatibilityError


def _group_norm(channels: int) -> nn.GroupNorm:
    groups = min(8, channels)
    while channels % groups:
        groups -= 1
    return nn.GroupNorm(groups, channels)


class ConvBlock(nn.Module):
    """Two 3x3 convolutions, each followed by GroupNorm and GELU."""

    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv2d(in_channels, out_channels, 3, padding=1),
            _group_norm(out_channels),
            nn.GELU(),
            nn.Conv2d(out_channels, out_channels, 3, padding=1),
            _group_norm(out_channels),
            nn.GELU(),
        )

    def forward(self, x):
        return self.net(x)


class UNet(nn.Module):
    def __init__(self, in_channels: int, base_width: int = 16, depth: int = 3):
        super().__init__()
        if in_channels < 1 or depth < 1 or base_width < 1:
            raise ValueError("in_channels, base_width, and depth must be positive")
        self.in_channels = in_channels
        self.base_width = base_width
        self.depth = depth

        self.encoders = nn.ModuleList()
        self.pool = nn.MaxPool2d(2)
        ch = in_channels
        for level in range(depth):
            out = base_width * (2**level)
            self.encoders.append(ConvBlock(ch, out))
            ch = out
        self.bottleneck = ConvBlock(ch, ch * 2)
        ch = ch * 2
        self.upsamplers = nn.ModuleList()
        self.decoders = nn.ModuleList()
        for level in reversed(range(depth)):
            out = base_width * (2**level)
            self.upsamplers.append(nn.ConvTranspose2d(ch, out, 2, stride=2))
            self.decoders.append(ConvBlock(out * 2, out))
            ch = out
        self.head = nn.Conv2d(ch, 3, 1)

    @property
    def downsample_factor(self) -> int:
        return 2**self.depth

    def check_spatial(self, height: int, width: int) -> None:
        factor = self.downsample_factor
        if height % factor or width % factor:
            raise ShapeCompatibilityError(
                f"spatial size {height}x{width} must be divisible by {factor} "
                f"(depth {self.depth})"
            )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        self.check_spatial(x.shape[-2], x.shape[-1])
        skips = []
        for encoder in self.encoders:
            x = encoder(x)
            skips.append(x)
            x = self.pool(x)
        x = self.bottleneck(x)
        for upsample, decoder, skip in zip(self.upsamplers, self.decoders, reversed(skips)):
            x = upsample(x)
            x = decoder(torch.cat([x, skip], dim=1))
        return self.head(x)

    def config(self) -> dict:
        return {
            "in_channels": self.in_channels,
            "base_width": self.base_width,
            "depth": self.depth,
        }

    @classmethod
    def from_config(cls, config: dict) -> "UNet":
        return cls(**config)
