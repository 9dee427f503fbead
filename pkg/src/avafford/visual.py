"""Multi-scale visual features: a small convolutional pyramid backbone, a
global-context enhancer (self-attention on the coarsest level plus a
top-down pathway), and the projection to the mixer-facing channel width."""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .attention import MultiHeadAttention
from .errors import BadShapeError

N_LEVELS = 4


@dataclass
class FeaturePyramid:
    """Four feature maps, level i at (H, W) / 2^(i+1)."""

    levels: list[torch.Tensor]

    def __post_init__(self):
        if len(self.levels) != N_LEVELS:
            raise BadShapeError(f"expected {N_LEVELS} levels, got {len(self.levels)}")

    def validate(self) -> None:
        for i in range(1, N_LEVELS):
            prev, cur = self.levels[i - 1], self.levels[i]
            if (prev.shape[-2] != 2 * cur.shape[-2]) or (prev.shape[-1] != 2 * cur.shape[-1]):
                raise BadShapeError(f"level {i + 1} spatial dims {tuple(cur.shape[-2:])} "
                                    f"do not halve level {i} dims {tuple(prev.shape[-2:])}")

    @property
    def widths(self) -> tuple[int, ...]:
        return tuple(lvl.shape[1] for lvl in self.levels)


def _conv_block(c_in: int, c_out: int, stride: int) -> list[nn.Module]:
    return [
        nn.Conv2d(c_in, c_out, kernel_size=3, stride=stride, padding=1),
        nn.GroupNorm(max(1, c_out // 8), c_out),
        nn.GELU(),
    ]


class PyramidBackbone(nn.Module):
    """Stand-in for a pretrained hierarchical image backbone.

    Stride-2 stem twice, then one stride-2 stage per remaining level, so the
    four outputs sit at 1/4, 1/8, 1/16, 1/32 of the input resolution.
    """

    def __init__(self, channels: tuple[int, int, int, int] = (32, 64, 128, 256)):
        super().__init__()
        c1, c2, c3, c4 = channels
        self.channels = channels
        self.stem = nn.Sequential(*_conv_block(3, c1 // 2 or 1, 2), *_conv_block(c1 // 2 or 1, c1, 2))
        self.stage2 = nn.Sequential(*_conv_block(c1, c2, 2), *_conv_block(c2, c2, 1))
        self.stage3 = nn.Sequential(*_conv_block(c2, c3, 2), *_conv_block(c3, c3, 1))
        self.stage4 = nn.Sequential(*_conv_block(c3, c4, 2), *_conv_block(c4, c4, 1))

    def forward(self, images: torch.Tensor) -> FeaturePyramid:
        """images: (B, 3, H, W) with H, W divisible by 32."""
        h, w = images.shape[-2:]
        if h % 32 or w % 32:
            raise BadShapeError(f"image dims must be divisible by 32, got {(h, w)}")
        l1 = self.stem(images)
        l2 = self.stage2(l1)
        l3 = self.stage3(l2)
        l4 = self.stage4(l3)
        return FeaturePyramid([l1, l2, l3, l4])


class SelfAttentionBlock(nn.Module):
    """Pre-norm residual transformer block; all-zero parameters act as identity."""

    def __init__(self, dim: int, n_heads: int = 4, mlp_ratio: int = 2):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = MultiHeadAttention(dim, n_heads)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(nn.Linear(dim, mlp_ratio * dim), nn.GELU(), nn.Linear(mlp_ratio * dim, dim))

    def forward(self, tokens: torch.Tensor) -> torch.Tensor:
        x = self.norm1(tokens)
        tokens = tokens + self.attn(x, x)
        tokens = tokens + self.mlp(self.norm2(tokens))
        return tokens


class PyramidEnhancer(nn.Module):
    """Global context on the coarsest level, then a top-down pathway that adds
    upsampled coarser features into finer levels after 1x1 channel projection.
    Shape preserving: output level i has exactly the input level i shape."""

    def __init__(self, channels: tuple[int, int, int, int], n_layers: int = 2, n_heads: int = 4):
        super().__init__()
        self.blocks = nn.ModuleList(SelfAttentionBlock(channels[-1], n_heads) for _ in range(n_layers))
        # lateral[i] projects level i+2's channels down to level i+1's
        self.lateral = nn.ModuleList(
            nn.Conv2d(channels[i + 1], channels[i], kernel_size=1) for i in range(N_LEVELS - 1)
        )

    def forward(self, pyr: FeaturePyramid) -> FeaturePyramid:
        l1, l2, l3, l4 = pyr.levels
        b, c4, h4, w4 = l4.shape
        tokens = l4.flatten(2).transpose(1, 2)  # (B, H4*W4, C4)
        for block in self.blocks:
            tokens = block(tokens)
        out4 = tokens.transpose(1, 2).reshape(b, c4, h4, w4)
        out3 = l3 + self.lateral[2](F.interpolate(out4, size=l3.shape[-2:], mode="bilinear", align_corners=False))
        out2 = l2 + self.lateral[1](F.interpolate(out3, size=l2.shape[-2:], mode="bilinear", align_corners=False))
        out1 = l1 + self.lateral[0](F.interpolate(out2, size=l1.shape[-2:], mode="bilinear", align_corners=False))
        return FeaturePyramid([out1, out2, out3, out4])


class VisualEncoder(nn.Module):
    """Backbone + enhancer + per-level 1x1 projection to a common width."""

    def __init__(self, channels: tuple[int, int, int, int] = (32, 64, 128, 256), width: int = 256,
                 enhancer_layers: int = 2, enhancer_heads: int = 4):
        super().__init__()
        self.backbone = PyramidBackbone(channels)
        self.enhancer = PyramidEnhancer(channels, enhancer_layers, enhancer_heads)
        self.to_width = nn.ModuleList(nn.Conv2d(c, width, kernel_size=1) for c in channels)
        self.width = width

    def forward(self, images: torch.Tensor) -> FeaturePyramid:
        pyr = self.enhancer(self.backbone(images))
        return FeaturePyramid([proj(lvl) for proj, lvl in zip(self.to_width, pyr.levels)])
