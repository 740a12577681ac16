"""3D U-Net with strided-conv downsampling and deep supervision.

The architecture is symmetric: a stem block at full resolution, then
``levels`` encoder stages (2-strided convolution followed by a block),
mirrored by ``levels`` decoder stages (2-strided transposed convolution,
skip concatenation, block). Every block is 2 groups of convolution,
batch normalization and leaky ReLU. The finest ``heads`` decoder blocks
each feed a 1x1x1 convolution with a sigmoid, so the forward pass
returns one score tensor per supervised resolution, finest first.

Channel widths double per level from ``base_width`` up to ``width_cap``.
Spatial dims must be divisible by ``2**levels`` so the transposed
convolutions retrace the encoder exactly.
"""

import torch
from torch import nn

from .config import TrainConfig

_SLOPE = 0.01
_HEAD_BIAS = -2.0


class ConvBlock(nn.Module):
    """2 x (3x3x3 conv, batch norm, leaky ReLU)."""

    def __init__(self, cin: int, cout: int):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv3d(cin, cout, 3, padding=1, bias=False),
            nn.BatchNorm3d(cout),
            nn.LeakyReLU(_SLOPE, inplace=True),
            nn.Conv3d(cout, cout, 3, padding=1, bias=False),
            nn.BatchNorm3d(cout),
            nn.LeakyReLU(_SLOPE, inplace=True),
        )

    def forward(self, x):
        return self.body(x)


class UNet3D(nn.Module):
    def __init__(self, config: TrainConfig, in_channels: int = 1):
        super().__init__()
        levels = int(config.levels)
        widths = [min(int(config.base_width) * 2 ** i, int(config.width_cap))
                  for i in range(levels + 1)]
        self.levels = levels
        self.heads_n = config.heads

        self.stem = ConvBlock(in_channels, widths[0])
        self.down = nn.ModuleList()
        for i in range(levels):
            self.down.append(nn.Sequential(
                nn.Conv3d(widths[i], widths[i + 1], 3, stride=2, padding=1, bias=False),
                nn.BatchNorm3d(widths[i + 1]),
                nn.LeakyReLU(_SLOPE, inplace=True),
                ConvBlock(widths[i + 1], widths[i + 1]),
            ))
        self.up = nn.ModuleList()
        self.dec = nn.ModuleList()
        for i in reversed(range(levels)):
            self.up.append(nn.ConvTranspose3d(widths[i + 1], widths[i], 2, stride=2))
            self.dec.append(ConvBlock(2 * widths[i], widths[i]))
        # decoder stage j (coarse to fine) emits resolution 1/2**(levels-1-j);
        # the finest heads_n stages carry score heads.
        self.heads = nn.ModuleList(
            nn.Conv3d(widths[levels - 1 - j], 1, 1)
            for j in range(levels - self.heads_n, levels))
        # anomalous voxels are rare, so start the score prior low instead of
        # at sigmoid(0) = 0.5; saves the early steps for actual structure
        for head in self.heads:
            nn.init.constant_(head.bias, _HEAD_BIAS)

    def forward(self, x) -> list[torch.Tensor]:
        """Score tensors for the supervised decoder blocks, finest first."""
        down = 2 ** self.levels
        for n in x.shape[2:]:
            if n % down:
                raise ValueError(
                    f"spatial dims {tuple(x.shape[2:])} must be divisible by {down}")
        skips = [self.stem(x)]
        for stage in self.down:
            skips.append(stage(skips[-1]))
        y = skips.pop()
        outputs = []
        first_head = self.levels - self.heads_n
        for j, (up, dec) in enumerate(zip(self.up, self.dec)):
            y = dec(torch.cat([up(y), skips.pop()], dim=1))
            if j >= first_head:
                outputs.append(torch.sigmoid(self.heads[j - first_head](y)))
        outputs.reverse()
        return outputs


def build_network(config: TrainConfig, in_channels: int = 1) -> UNet3D:
    return UNet3D(config, in_channels=in_channels)


def parameter_count(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())
