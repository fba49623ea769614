"""Video encoders for quality regression.

Two families share one interface: a ViT-style encoder (tubelet embedding,
pre-norm transformer blocks, mean pooling) and a factorized 3D-CNN. Both
return a pooled feature of width ``embed_dim`` plus a scalar quality score,
so they can stand in for each other as teacher or student.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List

import torch
import torch.nn.functional as F
from torch import nn
from torch.nn.init import trunc_normal_

from .errors import ConfigError, ShapeError

VIT = "vit"
CNN3D = "cnn3d"

GROUP_EMBEDDING = "embedding"
GROUP_POSITIONAL = "positional"
GROUP_HEAD = "head"


def block_group(index: int) -> str:
    return f"blocks[{index}]"


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters for one encoder.

    For ``family="cnn3d"`` the fields ``num_heads`` and ``tubelet_*`` are
    ignored (the CNN has no attention heads and no token grid).
    """

    family: str
    embed_dim: int
    depth: int
    num_heads: int = 1
    frames: int = 8
    height: int = 32
    width: int = 32
    tubelet_t: int = 1
    tubelet_h: int = 8
    tubelet_w: int = 8
    mlp_ratio: float = 4.0

    def __post_init__(self):
        if self.family not in (VIT, CNN3D):
            raise ConfigError(f"family must be '{VIT}' or '{CNN3D}', got {self.family!r}")
        for name in ("embed_dim", "depth", "num_heads", "frames", "height", "width",
                     "tubelet_t", "tubelet_h", "tubelet_w"):
            value = getattr(self, name)
            if not isinstance(value, int) or value <= 0:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if self.mlp_ratio <= 0:
            raise ConfigError(f"mlp_ratio must be positive, got {self.mlp_ratio!r}")
        if self.family == VIT:
            if self.frames % self.tubelet_t != 0:
                raise ConfigError(
                    f"frames % tubelet_t != 0 ({self.frames} % {self.tubelet_t})")
            if self.height % self.tubelet_h != 0:
                raise ConfigError(
                    f"height % tubelet_h != 0 ({self.height} % {self.tubelet_h})")
            if self.width % self.tubelet_w != 0:
                raise ConfigError(
                    f"width % tubelet_w != 0 ({self.width} % {self.tubelet_w})")
            if self.embed_dim % self.num_heads != 0:
                raise ConfigError(
                    f"embed_dim % num_heads != 0 ({self.embed_dim} % {self.num_heads})")
        else:
            # Spatial average-pool halves H and W after every other stage,
            # starting with the first.
            shrink = 2 ** ((self.depth + 1) // 2)
            if min(self.height, self.width) < shrink:
                raise ConfigError(
                    f"spatial size {self.height}x{self.width} too small for "
                    f"{self.depth // 2} downsampling stages")

    @property
    def clip_shape(self) -> tuple[int, int, int, int]:
        return (self.frames, 3, self.height, self.width)

    @property
    def num_tokens(self) -> int:
        if self.family != VIT:
            raise ConfigError("num_tokens is only defined for the vit family")
        return ((self.frames // self.tubelet_t)
                * (self.height // self.tubelet_h)
                * (self.width // self.tubelet_w))

    def with_geometry(self, frames: int, height: int, width: int) -> "ModelConfig":
        return ModelConfig(**{**self.__dict__, "frames": frames,
                              "height": height, "width": width})


@dataclass(frozen=True)
class ParameterStats:
    """Learnable-scalar counts, total and per named group."""

    total: int
    by_group: Dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if any(v < 0 for v in self.by_group.values()):
            raise ValueError("negative group count")
        if self.total != sum(self.by_group.values()):
            raise ValueError("total does not equal the sum of group counts")


class QualityHead(nn.Module):
    """One hidden layer of width ``dim``, GELU, scalar output."""

    def __init__(self, dim: int):
        super().__init__()
        self.fc1 = nn.Linear(dim, dim)
        self.fc2 = nn.Linear(dim, 1)

    def forward(self, x):
        return self.fc2(F.gelu(self.fc1(x)))


class TransformerBlock(nn.Module):
    """Pre-norm multi-head self-attention + MLP."""

    def __init__(self, dim: int, num_heads: int, mlp_ratio: float):
        super().__init__()
        self.num_heads = num_heads
        self.head_dim = dim // num_heads
        self.norm1 = nn.LayerNorm(dim)
        self.qkv = nn.Linear(dim, dim * 3)
        self.proj = nn.Linear(dim, dim)
        self.norm2 = nn.LayerNorm(dim)
        hidden = int(dim * mlp_ratio)
        self.fc1 = nn.Linear(dim, hidden)
        self.fc2 = nn.Linear(hidden, dim)

    def _attention(self, x):
        b, n, d = x.shape
        qkv = (self.qkv(x)
               .reshape(b, n, 3, self.num_heads, self.head_dim)
               .permute(2, 0, 3, 1, 4))
        q, k, v = qkv.unbind(0)
        out = F.scaled_dot_product_attention(q, k, v)
        out = out.transpose(1, 2).reshape(b, n, d)
        return self.proj(out)

    def forward(self, x):
        x = x + self._attention(self.norm1(x))
        x = x + self.fc2(F.gelu(self.fc1(self.norm2(x))))
        return x


class ConvStage(nn.Module):
    """3D conv 3x3x3 + group norm + GELU, optional 2x spatial pool."""

    def __init__(self, c_in: int, c_out: int, downsample: bool):
        super().__init__()
        self.conv = nn.Conv3d(c_in, c_out, kernel_size=3, padding=1)
        self.norm = nn.GroupNorm(math.gcd(8, c_out), c_out)
        self.pool = nn.AvgPool3d(kernel_size=(1, 2, 2)) if downsample else None

    def forward(self, x):
        x = F.gelu(self.norm(self.conv(x)))
        if self.pool is not None:
            x = self.pool(x)
        return x


class _Encoder(nn.Module):
    """Shared forward contract: clip(s) -> (pooled feature, quality score)."""

    config: ModelConfig

    def _prepare(self, clips: torch.Tensor) -> tuple[torch.Tensor, bool]:
        squeeze = clips.ndim == 4
        if squeeze:
            clips = clips.unsqueeze(0)
        if clips.ndim != 5 or tuple(clips.shape[1:]) != self.config.clip_shape:
            raise ShapeError(self.config.clip_shape, tuple(clips.shape[-4:]),
                             context=f"{self.config.family} input clip")
        # [B, T, 3, H, W] -> [B, 3, T, H, W]
        return clips.permute(0, 2, 1, 3, 4), squeeze

    def parameter_groups(self) -> Dict[str, List[nn.Parameter]]:
        raise NotImplementedError

    def forward(self, clips):  # pragma: no cover - overridden
        raise NotImplementedError


class VideoViT(_Encoder):
    """Tubelet ViT over video clips with mean pooling and a regression head."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        if config.family != VIT:
            raise ConfigError(f"VideoViT requires family '{VIT}'")
        self.config = config
        d = config.embed_dim
        self.patch_embed = nn.Conv3d(
            3, d,
            kernel_size=(config.tubelet_t, config.tubelet_h, config.tubelet_w),
            stride=(config.tubelet_t, config.tubelet_h, config.tubelet_w))
        self.pos_embed = nn.Parameter(torch.zeros(1, config.num_tokens, d))
        self.blocks = nn.ModuleList(
            TransformerBlock(d, config.num_heads, config.mlp_ratio)
            for _ in range(config.depth))
        self.norm = nn.LayerNorm(d)
        self.head = QualityHead(d)

    def forward(self, clips):
        x, squeeze = self._prepare(clips)
        x = self.patch_embed(x)              # [B, D, T', H', W']
        x = x.flatten(2).transpose(1, 2)     # [B, N, D]
        x = x + self.pos_embed
        for block in self.blocks:
            x = block(x)
        x = self.norm(x)
        feature = x.mean(dim=1)
        score = self.head(feature).squeeze(-1)
        if squeeze:
            return feature[0], score[0]
        return feature, score

    def parameter_groups(self):
        groups = {
            GROUP_EMBEDDING: list(self.patch_embed.parameters()),
            GROUP_POSITIONAL: [self.pos_embed],
        }
        for i, block in enumerate(self.blocks):
            groups[block_group(i)] = list(block.parameters())
        groups[GROUP_HEAD] = list(self.norm.parameters()) + list(self.head.parameters())
        return groups


class VideoCNN3D(_Encoder):
    """Small factorized 3D-CNN: conv stages, global average pool, head."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        if config.family != CNN3D:
            raise ConfigError(f"VideoCNN3D requires family '{CNN3D}'")
        self.config = config
        c = config.embed_dim
        self.stages = nn.ModuleList(
            ConvStage(3 if i == 0 else c, c, downsample=(i % 2 == 0))
            for i in range(config.depth))
        self.head = QualityHead(c)

    def forward(self, clips):
        x, squeeze = self._prepare(clips)
        for stage in self.stages:
            x = stage(x)
        feature = x.mean(dim=(2, 3, 4))
        score = self.head(feature).squeeze(-1)
        if squeeze:
            return feature[0], score[0]
        return feature, score

    def parameter_groups(self):
        groups = {block_group(i): list(stage.parameters())
                  for i, stage in enumerate(self.stages)}
        groups[GROUP_HEAD] = list(self.head.parameters())
        return groups


def build_encoder(config: ModelConfig, seed: int,
                  dtype: torch.dtype = torch.float32) -> _Encoder:
    """Build an encoder with parameters initialized deterministically from seed.

    Weights are truncated-normal (std 0.02), biases zero, norm scales one.
    The same (config, seed) always yields bit-identical parameters.
    """
    model = VideoViT(config) if config.family == VIT else VideoCNN3D(config)
    generator = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for module in model.modules():
            if isinstance(module, (nn.Linear, nn.Conv3d)):
                trunc_normal_(module.weight, std=0.02, generator=generator)
                if module.bias is not None:
                    module.bias.zero_()
            elif isinstance(module, (nn.LayerNorm, nn.GroupNorm)):
                module.weight.fill_(1.0)
                module.bias.zero_()
        if isinstance(model, VideoViT):
            trunc_normal_(model.pos_embed, std=0.02, generator=generator)
    if dtype != torch.float32:
        model = model.to(dtype)
    return model


def count_parameters(model: _Encoder) -> ParameterStats:
    """Exact learnable-scalar count of a built model, per named group."""
    by_group = {name: sum(p.numel() for p in params)
                for name, params in model.parameter_groups().items()}
    return ParameterStats(total=sum(by_group.values()), by_group=by_group)


def expected_parameter_stats(config: ModelConfig) -> ParameterStats:
    """Closed-form parameter counts for a config, without building the model.

    Matches count_parameters(build_encoder(config, seed)) exactly; lets large
    configs be sized without allocating their tensors.
    """
    d = config.embed_dim
    by_group: Dict[str, int] = {}
    if config.family == VIT:
        patch_in = 3 * config.tubelet_t * config.tubelet_h * config.tubelet_w
        by_group[GROUP_EMBEDDING] = d * patch_in + d
        by_group[GROUP_POSITIONAL] = config.num_tokens * d
        hidden = int(d * config.mlp_ratio)
        block = (2 * d                     # norm1
                 + d * 3 * d + 3 * d       # qkv
                 + d * d + d               # attention projection
                 + 2 * d                   # norm2
                 + d * hidden + hidden     # fc1
                 + hidden * d + d)         # fc2
        for i in range(config.depth):
            by_group[block_group(i)] = block
        by_group[GROUP_HEAD] = 2 * d + (d * d + d) + (d + 1)
    else:
        for i in range(config.depth):
            c_in = 3 if i == 0 else d
            by_group[block_group(i)] = (c_in * d * 27 + d) + 2 * d
        by_group[GROUP_HEAD] = (d * d + d) + (d + 1)
    return ParameterStats(total=sum(by_group.values()), by_group=by_group)
