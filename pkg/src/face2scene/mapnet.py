"""Degradation mapping network.

Converts the spatial degradation code into an ordered set of
conditioning tokens: overlap patch embedding (3x3 conv, stride 2,
LayerNorm), dual-branch subtractive attention with a learnable mixing
scalar, then grid average pooling at 4x4 / 2x2 / 1x1 with a small MLP +
LayerNorm per scale. Full mode emits 16 + 4 + 1 = 21 tokens; ablation
modes keep only the coarser suffixes (5 or 1 tokens).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ContractError, ShapeError, TooSmallFaceError
from .fadex import DegCode

MODES = {"all": 21, "global+intermediate": 5, "global": 1}
GRIDS = (4, 2, 1)  # local, intermediate, global pooling grids


@dataclass
class MapnetConfig:
    in_channels: int = 32  # matches the degradation encoder
    heads: int = 8
    token_dim: int = 64  # the full-scale model uses 1024
    lambda_init: float = 0.0
    mlp_hidden_factor: int = 2
    shared_mlp: bool = False  # one MLP for all scales instead of one per scale

    def validate(self) -> "MapnetConfig":
        if self.heads < 2 or self.heads % 2 != 0:
            raise ContractError(f"heads must be even (split across two branches), got {self.heads}")
        if self.in_channels % (self.heads // 2) != 0:
            raise ContractError(
                f"in_channels {self.in_channels} must divide into {self.heads // 2} heads per branch"
            )
        return self


class RMSNorm(nn.Module):
    def __init__(self, dim: int, eps: float = 1e-8):
        super().__init__()
        self.eps = eps
        self.gain = nn.Parameter(torch.ones(dim))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        rms = torch.sqrt(x.pow(2).mean(dim=-1, keepdim=True) + self.eps)
        return x / rms * self.gain


class PatchEmbed(nn.Module):
    """Overlap patch embedding: 3x3 conv stride 2, channels C -> 2C, LayerNorm."""

    def __init__(self, channels: int):
        super().__init__()
        self.conv = nn.Conv2d(channels, 2 * channels, 3, stride=2, padding=1)
        self.norm = nn.LayerNorm(2 * channels)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-1] < 8 or x.shape[-2] < 8:
            raise TooSmallFaceError(
                f"code side {tuple(x.shape[-2:])} < 8: face crop below the 16-pixel minimum"
            )
        y = self.conv(x)  # (B, 2C, h/2, w/2)
        y = y.permute(0, 2, 3, 1)
        y = self.norm(y)
        return y.permute(0, 3, 1, 2)


class DegradationAttention(nn.Module):
    """Dual-branch residual attention (A1 - lambda * A2) over shared values.

    Queries/keys of the first ``heads/2`` heads come from the first
    channel half, the rest from the second half; values come from the
    full concatenation so each head mixes a double-width value vector.
    The result is RMS-normalized and projected back to C channels.
    """

    def __init__(self, cfg: MapnetConfig):
        super().__init__()
        cfg.validate()
        c = cfg.in_channels
        self.cfg = cfg
        self.heads_per_branch = cfg.heads // 2
        self.head_dim = c // self.heads_per_branch
        self.q1 = nn.Linear(c, c, bias=False)
        self.k1 = nn.Linear(c, c, bias=False)
        self.q2 = nn.Linear(c, c, bias=False)
        self.k2 = nn.Linear(c, c, bias=False)
        self.v = nn.Linear(2 * c, 2 * c, bias=False)
        self.mix = nn.Parameter(torch.tensor(float(cfg.lambda_init)))
        self.norm = RMSNorm(2 * c)
        self.proj = nn.Linear(2 * c, c)

    def _split_heads(self, x: torch.Tensor, dim_per_head: int) -> torch.Tensor:
        b, n, _ = x.shape
        return x.reshape(b, n, self.heads_per_branch, dim_per_head).transpose(1, 2)

    def components(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """Attention maps A1, A2 (rows sum to 1) and per-head values."""
        if x.dim() != 4:
            raise ShapeError(f"expected (B, 2C, H, W), got {tuple(x.shape)}")
        b, c2, h, w = x.shape
        if c2 % 2 != 0 or c2 != 2 * self.cfg.in_channels:
            raise ContractError(f"channel count {c2} must equal 2 * {self.cfg.in_channels}")
        n = h * w
        tokens = x.reshape(b, c2, n).transpose(1, 2)  # (B, N, 2C)
        f1, f2 = tokens[..., : c2 // 2], tokens[..., c2 // 2 :]
        scale = 1.0 / math.sqrt(self.head_dim)
        a1 = torch.softmax(
            self._split_heads(self.q1(f1), self.head_dim)
            @ self._split_heads(self.k1(f1), self.head_dim).transpose(-1, -2) * scale,
            dim=-1,
        )
        a2 = torch.softmax(
            self._split_heads(self.q2(f2), self.head_dim)
            @ self._split_heads(self.k2(f2), self.head_dim).transpose(-1, -2) * scale,
            dim=-1,
        )
        values = self._split_heads(self.v(tokens), 2 * self.head_dim)  # (B, nh, N, 2dh)
        return a1, a2, values

    def combine(self, a1: torch.Tensor, a2: torch.Tensor, values: torch.Tensor) -> torch.Tensor:
        """Pre-projection output of the subtractive attention."""
        mixed = (a1 - self.mix * a2) @ values  # (B, nh, N, 2dh)
        b, nh, n, dv = mixed.shape
        return mixed.transpose(1, 2).reshape(b, n, nh * dv)  # (B, N, 2C)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, _, h, w = x.shape
        a1, a2, values = self.components(x)
        y = self.combine(a1, a2, values)
        y = self.proj(self.norm(y))  # (B, N, C)
        return y.transpose(1, 2).reshape(b, self.cfg.in_channels, h, w)


class TokenPool(nn.Module):
    """Grid average pooling at three scales with a small MLP + LayerNorm each."""

    def __init__(self, cfg: MapnetConfig):
        super().__init__()
        c, d = cfg.in_channels, cfg.token_dim
        hidden = cfg.mlp_hidden_factor * d

        def mlp():
            return nn.Sequential(nn.Linear(c, hidden), nn.LeakyReLU(0.2), nn.Linear(hidden, d))

        n_mlps = 1 if cfg.shared_mlp else len(GRIDS)
        self.mlps = nn.ModuleList([mlp() for _ in range(n_mlps)])
        self.norms = nn.ModuleList([nn.LayerNorm(d) for _ in range(n_mlps)])
        self.shared = cfg.shared_mlp

    def pooled(self, y: torch.Tensor) -> list[torch.Tensor]:
        """Pre-MLP pooled cell vectors per grid scale, row-major."""
        if y.shape[-1] < GRIDS[0] or y.shape[-2] < GRIDS[0]:
            raise TooSmallFaceError(f"attention output side {tuple(y.shape[-2:])} < {GRIDS[0]}")
        out = []
        for g in GRIDS:
            cells = F.adaptive_avg_pool2d(y, (g, g))  # (B, C, g, g)
            out.append(cells.flatten(2).transpose(1, 2))  # (B, g*g, C)
        return out

    def forward(self, y: torch.Tensor) -> torch.Tensor:
        tokens = []
        for scale, cells in enumerate(self.pooled(y)):
            k = 0 if self.shared else scale
            tokens.append(self.norms[k](self.mlps[k](cells)))
        return torch.cat(tokens, dim=1)  # (B, 21, D)


class MapnetModel(nn.Module):
    def __init__(self, cfg: MapnetConfig):
        super().__init__()
        self.cfg = cfg.validate()
        self.patch_embed = PatchEmbed(cfg.in_channels)
        self.attention = DegradationAttention(cfg)
        self.pool = TokenPool(cfg)

    @staticmethod
    def mode_slice(mode: str) -> slice:
        if mode not in MODES:
            raise ContractError(f"unknown token mode {mode!r}; choose from {sorted(MODES)}")
        return slice(21 - MODES[mode], 21)

    def forward(self, codes: torch.Tensor, mode: str = "all") -> torch.Tensor:
        """Batched (B, C, H, W) codes -> (B, n_tokens, D) conditioning tokens."""
        y = self.attention(self.patch_embed(codes))
        tokens = self.pool(y)
        return tokens[:, self.mode_slice(mode), :]

    def map_tokens(self, code: DegCode, mode: str = "all") -> torch.Tensor:
        """Single code -> (n_tokens, D), no gradients."""
        with torch.no_grad():
            return self.forward(code.features[None], mode)[0]


def token_count(mode: str) -> int:
    if mode not in MODES:
        raise ContractError(f"unknown token mode {mode!r}")
    return MODES[mode]
