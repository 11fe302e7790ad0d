import math

import torch
import torch.nn.functional as F
from torch import nn


def timestep_encoding(t, dim):
    """Sinusoidal encoding of integer timesteps ``t`` (B,) -> (B, dim)."""
    t = torch.as_tensor(t).reshape(-1).to(torch.float64)
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=torch.float64) / half)
    ang = t[:, None] * freqs[None]
    enc = torch.cat([torch.sin(ang), torch.cos(ang)], dim=-1)
    if dim % 2:
        enc = F.pad(enc, (0, 1))
    return enc


class MultiHeadAttention(nn.Module):
    def __init__(self, dim, heads):
        super().__init__()
        if dim % heads:
            raise ValueError(f"dim {dim} not divisible by {heads} heads")
        self.heads = heads
        self.q = nn.Linear(dim, dim)
        self.k = nn.Linear(dim, dim)
        self.v = nn.Linear(dim, dim)
        self.o = nn.Linear(dim, dim)

    def forward(self, x, context=None):
        context = x if context is None else context
        B, Sq, D = x.shape
        Sk = context.shape[1]
        h = self.heads
        q = self.q(x).view(B, Sq, h, D // h).transpose(1, 2)
        k = self.k(context).view(B, Sk, h, D // h).transpose(1, 2)
        v = self.v(context).view(B, Sk, h, D // h).transpose(1, 2)
        out = F.scaled_dot_product_attention(q, k, v)
        return self.o(out.transpose(1, 2).reshape(B, Sq, D))


class FeedForward(nn.Sequential):
    def __init__(self, dim, mult=2):
        super().__init__(nn.Linear(dim, dim * mult), nn.GELU(), nn.Linear(dim * mult, dim))


class TransformerBlock(nn.Module):
    """Pre-norm encoder layer: x + MHA(LN x), then + FFN(LN x)."""

    def __init__(self, dim, heads, ffn_mult=2):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = MultiHeadAttention(dim, heads)
        self.norm2 = nn.LayerNorm(dim)
        self.ffn = FeedForward(dim, ffn_mult)

    def forward(self, x):
        x = x + self.attn(self.norm1(x))
        return x + self.ffn(self.norm2(x))


class CrossAttentionBlock(nn.Module):
    """Pre-norm decoder-style layer: queries attend to a separate context."""

    def __init__(self, dim, heads, ffn_mult=2):
        super().__init__()
        self.norm_q = nn.LayerNorm(dim)
        self.norm_kv = nn.LayerNorm(dim)
        self.attn = MultiHeadAttention(dim, heads)
        self.norm2 = nn.LayerNorm(dim)
        self.ffn = FeedForward(dim, ffn_mult)

    def forward(self, queries, context):
        x = queries + self.attn(self.norm_q(queries), self.norm_kv(context))
        return x + self.ffn(self.norm2(x))
