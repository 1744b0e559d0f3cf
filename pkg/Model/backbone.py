"""Skip-connected diffusion transformer that predicts the target velocity.

Input frames are the channel-wise concatenation of the noisy target latent and
the mixture latent. A single condition vector (timestep embedding plus the
projected reference embedding) drives adaLN-Zero modulation in every block.
Block i is paired with block depth + 1 - i through a concat-then-linear skip.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Any, NamedTuple, Optional

import torch
import torch.nn.functional as F
from einops import rearrange
from torch import Tensor, nn

from Engine.errors import ConfigurationError, ParameterError


PRESETS = {
    "base": {"depth": 12, "width": 768, "heads": 12},
    "toy": {"depth": 4, "width": 192, "heads": 4},
}


@dataclass
class BackboneConfig:
    depth: int = 12
    width: int = 768
    heads: int = 12
    latent_channels: int = 128
    ref_dim: int = 512
    rope_base: float = 10000.0
    mlp_ratio: float = 4.0
    freq_dim: int = 256
    use_skip: bool = True

    @classmethod
    def preset(cls, name: str, **overrides: Any) -> "BackboneConfig":
        if name not in PRESETS:
            raise ConfigurationError(f"unknown backbone preset {name!r}")
        return cls(**{**PRESETS[name], **overrides})

    @property
    def head_dim(self) -> int:
        return self.width // self.heads

    def validate(self) -> None:
        if self.depth < 2 or self.depth % 2:
            raise ConfigurationError(f"depth must be even and >= 2 for skip pairing, got {self.depth}")
        if self.width % self.heads:
            raise ConfigurationError(f"width {self.width} is not divisible by heads {self.heads}")
        if self.head_dim % 2:
            raise ConfigurationError(f"RoPE needs an even head_dim, got {self.head_dim}")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def time_embedding(t: Tensor | int, dim: int, max_period: float = 10000.0) -> Tensor:
    """Sinusoidal timestep embedding, [cos | sin] halves. Scalar t gives a (dim,) vector."""
    if dim < 2:
        raise ParameterError(f"embedding dim must be >= 2, got {dim}")
    scalar = not torch.is_tensor(t) or t.dim() == 0
    steps = torch.as_tensor(t, dtype=torch.float64).reshape(-1)
    if torch.any(steps < 1):
        raise ParameterError("timesteps start at 1")
    half = dim // 2
    freqs = torch.exp(-math.log(max_period) * torch.arange(half, dtype=torch.float64) / half)
    args = steps[:, None] * freqs[None].to(steps.device)
    emb = torch.cat([torch.cos(args), torch.sin(args)], dim=-1)
    if dim % 2:
        emb = torch.cat([emb, torch.zeros_like(emb[:, :1])], dim=-1)
    return emb[0] if scalar else emb


def rope_rotate(x: Tensor, positions: Tensor, base: float = 10000.0) -> Tensor:
    """Rotate (..., N, head_dim) query/key vectors by their frame positions."""
    head_dim = x.shape[-1]
    if head_dim % 2:
        raise ConfigurationError(f"RoPE needs an even head_dim, got {head_dim}")
    positions = torch.as_tensor(positions, device=x.device).reshape(-1)
    if positions.numel() != x.shape[-2]:
        raise ParameterError(
            f"{positions.numel()} positions given for {x.shape[-2]} frames"
        )
    half = head_dim // 2
    freqs = base ** (-torch.arange(half, dtype=torch.float64, device=x.device) / half)
    angles = positions.to(torch.float64)[:, None] * freqs[None]
    cos = torch.cos(angles).to(x.dtype)
    sin = torch.sin(angles).to(x.dtype)
    x1, x2 = x[..., :half], x[..., half:]
    return torch.cat([x1 * cos - x2 * sin, x1 * sin + x2 * cos], dim=-1)


def modulate(x: Tensor, shift: Tensor, scale: Tensor) -> Tensor:
    return x * (1 + scale.unsqueeze(1)) + shift.unsqueeze(1)


class AdaLNParams(NamedTuple):
    shift_attn: Tensor
    scale_attn: Tensor
    gate_attn: Tensor
    shift_mlp: Tensor
    scale_mlp: Tensor
    gate_mlp: Tensor


class TimestepEmbedder(nn.Module):
    def __init__(self, width: int, freq_dim: int = 256) -> None:
        super().__init__()
        self.freq_dim = freq_dim
        self.mlp = nn.Sequential(
            nn.Linear(freq_dim, width),
            nn.SiLU(),
            nn.Linear(width, width),
        )

    def forward(self, t: Tensor) -> Tensor:
        freq = time_embedding(t, self.freq_dim).to(self.mlp[0].weight)
        if freq.dim() == 1:
            freq = freq.unsqueeze(0)
        return self.mlp(freq)


class Attention(nn.Module):
    def __init__(self, width: int, heads: int, rope_base: float) -> None:
        super().__init__()
        self.heads = heads
        self.rope_base = rope_base
        self.qkv = nn.Linear(width, 3 * width)
        self.proj = nn.Linear(width, width)

    def forward(self, x: Tensor, positions: Tensor) -> Tensor:
        q, k, v = rearrange(self.qkv(x), "b n (three h d) -> three b h n d", three=3, h=self.heads)
        q = rope_rotate(q, positions, self.rope_base)
        k = rope_rotate(k, positions, self.rope_base)
        out = F.scaled_dot_product_attention(q, k, v)
        return self.proj(rearrange(out, "b h n d -> b n (h d)"))


class Mlp(nn.Module):
    def __init__(self, width: int, hidden: int) -> None:
        super().__init__()
        self.fc1 = nn.Linear(width, hidden)
        self.act = nn.GELU(approximate="tanh")
        self.fc2 = nn.Linear(hidden, width)

    def forward(self, x: Tensor) -> Tensor:
        return self.fc2(self.act(self.fc1(x)))


class DiTBlock(nn.Module):
    def __init__(self, width: int, heads: int, mlp_ratio: float, rope_base: float) -> None:
        super().__init__()
        self.norm1 = nn.LayerNorm(width, elementwise_affine=False, eps=1e-6)
        self.attn = Attention(width, heads, rope_base)
        self.norm2 = nn.LayerNorm(width, elementwise_affine=False, eps=1e-6)
        self.mlp = Mlp(width, int(width * mlp_ratio))
        self.adaLN_modulation = nn.Sequential(nn.SiLU(), nn.Linear(width, 6 * width))

    def modulation(self, cond: Tensor) -> AdaLNParams:
        if cond.shape[-1] != self.adaLN_modulation[1].in_features:
            raise ParameterError(
                f"condition has {cond.shape[-1]} dims, block expects {self.adaLN_modulation[1].in_features}"
            )
        return AdaLNParams(*self.adaLN_modulation(cond).chunk(6, dim=-1))

    def forward_with(self, h: Tensor, params: AdaLNParams, positions: Tensor) -> Tensor:
        p = params
        h = h + p.gate_attn.unsqueeze(1) * self.attn(modulate(self.norm1(h), p.shift_attn, p.scale_attn), positions)
        h = h + p.gate_mlp.unsqueeze(1) * self.mlp(modulate(self.norm2(h), p.shift_mlp, p.scale_mlp))
        return h

    def forward(self, h: Tensor, cond: Tensor, positions: Tensor) -> Tensor:
        return self.forward_with(h, self.modulation(cond), positions)


class SkipMerge(nn.Module):
    """Concatenate [deep | shallow] on channels and project back to width."""

    def __init__(self, width: int) -> None:
        super().__init__()
        self.width = width
        self.linear = nn.Linear(2 * width, width)

    def reset_to_deep(self) -> None:
        with torch.no_grad():
            self.linear.weight.zero_()
            self.linear.weight[:, : self.width].copy_(torch.eye(self.width))
            self.linear.bias.zero_()

    def forward(self, shallow: Tensor, deep: Tensor) -> Tensor:
        if shallow.shape != deep.shape:
            raise ParameterError(
                f"skip branches differ in shape: {tuple(shallow.shape)} vs {tuple(deep.shape)}"
            )
        return self.linear(torch.cat([deep, shallow], dim=-1))


class FinalLayer(nn.Module):
    def __init__(self, width: int, out_channels: int) -> None:
        super().__init__()
        self.norm = nn.LayerNorm(width, elementwise_affine=False, eps=1e-6)
        self.adaLN_modulation = nn.Sequential(nn.SiLU(), nn.Linear(width, 2 * width))
        self.linear = nn.Linear(width, out_channels)

    def forward(self, h: Tensor, cond: Tensor) -> Tensor:
        shift, scale = self.adaLN_modulation(cond).chunk(2, dim=-1)
        return self.linear(modulate(self.norm(h), shift, scale))


class ExtractionTransformer(nn.Module):
    def __init__(self, config: BackboneConfig) -> None:
        super().__init__()
        config.validate()
        self.config = config
        width, channels = config.width, config.latent_channels

        self.input_proj = nn.Linear(2 * channels, width)
        self.t_embedder = TimestepEmbedder(width, config.freq_dim)
        self.ref_proj = nn.Linear(config.ref_dim, width)
        self.null_ref = nn.Parameter(torch.randn(config.ref_dim) / math.sqrt(config.ref_dim))
        self.blocks = nn.ModuleList(
            DiTBlock(width, config.heads, config.mlp_ratio, config.rope_base)
            for _ in range(config.depth)
        )
        self.skips = nn.ModuleList(
            SkipMerge(width) for _ in range(config.depth // 2 if config.use_skip else 0)
        )
        self.final = FinalLayer(width, channels)
        self.initialize_weights()

    def initialize_weights(self) -> None:
        def _basic_init(module: nn.Module) -> None:
            if isinstance(module, nn.Linear):
                nn.init.xavier_uniform_(module.weight)
                nn.init.zeros_(module.bias)

        self.apply(_basic_init)
        for layer in (self.t_embedder.mlp[0], self.t_embedder.mlp[2]):
            nn.init.normal_(layer.weight, std=0.02)
        nn.init.normal_(self.ref_proj.weight, std=0.02)

        # adaLN-Zero: every block starts as the identity
        for block in self.blocks:
            nn.init.zeros_(block.adaLN_modulation[-1].weight)
            nn.init.zeros_(block.adaLN_modulation[-1].bias)
        for skip in self.skips:
            skip.reset_to_deep()
        nn.init.zeros_(self.final.adaLN_modulation[-1].weight)
        nn.init.zeros_(self.final.adaLN_modulation[-1].bias)
        nn.init.zeros_(self.final.linear.weight)
        nn.init.zeros_(self.final.linear.bias)

    def null_embedding(self) -> Tensor:
        return self.null_ref

    def fuse_condition(self, t_embed: Tensor, ref: Tensor) -> Tensor:
        if ref.shape[-1] != self.config.ref_dim:
            raise ParameterError(
                f"reference embedding has {ref.shape[-1]} dims, expected {self.config.ref_dim}"
            )
        return t_embed + self.ref_proj(ref.to(t_embed.dtype))

    def forward(
        self,
        x_t: Tensor,
        x_m: Tensor,
        ref: Optional[Tensor],
        t: Tensor | int,
        positions: Optional[Tensor] = None,
    ) -> Tensor:
        unbatched = x_t.dim() == 2
        if unbatched:
            x_t, x_m = x_t.unsqueeze(0), x_m.unsqueeze(0)
        if x_t.shape[:2] != x_m.shape[:2]:
            raise ParameterError(
                f"noisy and mixture latents differ in frames: {tuple(x_t.shape)} vs {tuple(x_m.shape)}"
            )
        channels = self.config.latent_channels
        if x_t.shape[-1] != channels or x_m.shape[-1] != channels:
            raise ParameterError(f"latents must have {channels} channels")
        batch, frames = x_t.shape[:2]

        if ref is None:
            ref = self.null_ref
        if ref.dim() == 1:
            ref = ref.unsqueeze(0).expand(batch, -1)
        t = torch.as_tensor(t, device=x_t.device).reshape(-1)
        if t.numel() == 1:
            t = t.expand(batch)
        if positions is None:
            positions = torch.arange(frames, device=x_t.device)

        h = self.input_proj(torch.cat([x_t, x_m], dim=-1))
        cond = self.fuse_condition(self.t_embedder(t), ref)

        half = self.config.depth // 2
        records: list[Tensor] = []
        for i, block in enumerate(self.blocks):
            if self.skips and i >= half:
                j = i - half
                h = self.skips[j](records[half - 1 - j], h)
            h = block(h, cond, positions)
            if i < half:
                records.append(h)

        out = self.final(h, cond)
        return out.squeeze(0) if unbatched else out
