"""Compact video transformer for binary clip classification.

Masked-autoencoder-style geometry: the clip is cut into non-overlapping
tubelets (2 frames x 32 x 32 pixels), linearly embedded, tagged with fixed
sinusoidal positions and run through pre-norm attention blocks; mean-pooled
tokens feed a two-way head (index 1 = high visual damage).

The forward pass uses only ops with exact ONNX counterparts (matmul,
layer norm, softmax, erf-based GELU), so the exported graph reproduces it
op for op.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn


@dataclass(frozen=True)
class ModelConfig:
    frames: int = 16
    image_size: int = 224
    channels: int = 3
    tubelet_t: int = 2
    patch: int = 32
    hidden: int = 48
    heads: int = 4
    layers: int = 2
    mlp: int = 96

    @property
    def tokens(self) -> int:
        side = self.image_size // self.patch
        return (self.frames // self.tubelet_t) * side * side

    @property
    def tubelet_dim(self) -> int:
        return self.tubelet_t * self.patch * self.patch * self.channels


def sinusoidal_positions(tokens: int, dim: int) -> np.ndarray:
    """Fixed sin/cos table, float32; shared with the ONNX exporter."""
    position = np.arange(tokens, dtype=np.float64)[:, None]
    div = np.exp(np.arange(0, dim, 2, dtype=np.float64) * (-math.log(10000.0) / dim))
    table = np.zeros((tokens, dim), dtype=np.float64)
    table[:, 0::2] = np.sin(position * div)
    table[:, 1::2] = np.cos(position * div[: table[:, 1::2].shape[1]])
    return table.astype(np.float32)


class Block(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        d = cfg.hidden
        self.ln1 = nn.LayerNorm(d)
        self.q = nn.Linear(d, d)
        self.k = nn.Linear(d, d)
        self.v = nn.Linear(d, d)
        self.proj = nn.Linear(d, d)
        self.ln2 = nn.LayerNorm(d)
        self.fc1 = nn.Linear(d, cfg.mlp)
        self.fc2 = nn.Linear(cfg.mlp, d)
        self.heads = cfg.heads
        self.head_dim = d // cfg.heads
        self.scale = 1.0 / math.sqrt(self.head_dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, t, d = x.shape
        h = self.ln1(x)
        q = self.q(h).reshape(b, t, self.heads, self.head_dim).permute(0, 2, 1, 3)
        k = self.k(h).reshape(b, t, self.heads, self.head_dim).permute(0, 2, 1, 3)
        v = self.v(h).reshape(b, t, self.heads, self.head_dim).permute(0, 2, 1, 3)
        scores = (q @ k.transpose(-1, -2)) * self.scale
        attn = scores.softmax(dim=-1)
        ctx = (attn @ v).permute(0, 2, 1, 3).reshape(b, t, d)
        x = x + self.proj(ctx)
        h = self.ln2(x)
        return x + self.fc2(F.gelu(self.fc1(h)))


class TinyVideoTransformer(nn.Module):
    def __init__(self, cfg: ModelConfig | None = None):
        super().__init__()
        self.cfg = cfg or ModelConfig()
        c = self.cfg
        self.embed = nn.Linear(c.tubelet_dim, c.hidden)
        self.register_buffer(
            "pos", torch.from_numpy(sinusoidal_positions(c.tokens, c.hidden))
        )
        self.blocks = nn.ModuleList(Block(c) for _ in range(c.layers))
        self.final_ln = nn.LayerNorm(c.hidden)
        self.head = nn.Linear(c.hidden, 2)

    def tokenize(self, x: torch.Tensor) -> torch.Tensor:
        """(B, 16, 224, 224, 3) -> (B, tokens, tubelet_dim), row-major tubelets."""
        c = self.cfg
        b = x.shape[0]
        side = c.image_size // c.patch
        x = x.reshape(
            b, c.frames // c.tubelet_t, c.tubelet_t, side, c.patch, side, c.patch, c.channels
        )
        x = x.permute(0, 1, 3, 5, 2, 4, 6, 7)
        return x.reshape(b, c.tokens, c.tubelet_dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = self.embed(self.tokenize(x)) + self.pos
        for block in self.blocks:
            x = block(x)
        x = self.final_ln(x)
        return self.head(x.mean(dim=1))

    def probs(self, x: torch.Tensor) -> torch.Tensor:
        return self.forward(x).softmax(dim=-1)
