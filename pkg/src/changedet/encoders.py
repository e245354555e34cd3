"""Dual encoders and the dense upsampler.

The image side is a small patch transformer: non-overlapping patch embedding,
sinusoidal position encoding, pre-norm transformer blocks and a final linear
projection into the shared embedding width. The text side encodes one token
sequence per class, built from a bank of learnable context vectors followed by
a learnable class token, and mean-pools the sequence. Both sides project into
the same width so cosine similarities between them are well defined.

A lightweight pyramid upsampler turns the coarse patch grid into dense
per-pixel features (bilinear upsampling followed by two 3x3 convolutions).
"""

from __future__ import annotations

import math
import threading

import torch
import torch.nn as nn
import torch.nn.functional as F

from .validation import ValidationError

__all__ = [
    "ImageEncoder",
    "PromptBank",
    "TextEncoder",
    "DenseUpsampler",
    "normalize_rows",
    "zero_norm_clamps",
    "reset_zero_norm_clamps",
]

NORM_EPS = 1e-8

_clamp_lock = threading.Lock()
_zero_norm_clamps = 0


def zero_norm_clamps() -> int:
    """Number of rows clamped by :func:`normalize_rows` since the last reset."""
    return _zero_norm_clamps


def reset_zero_norm_clamps() -> None:
    global _zero_norm_clamps
    with _clamp_lock:
        _zero_norm_clamps = 0


def normalize_rows(x: torch.Tensor, eps: float = NORM_EPS) -> torch.Tensor:
    """L2-normalize the last dimension of ``x``.

    Rows whose norm falls below ``eps`` are divided by ``eps`` instead (an
    all-zero row stays zero); each such row increments a diagnostic counter
    readable via :func:`zero_norm_clamps`.
    """
    global _zero_norm_clamps
    norms = x.norm(dim=-1, keepdim=True)
    n_clamped = int((norms < eps).sum())
    if n_clamped:
        with _clamp_lock:
            _zero_norm_clamps += n_clamped
    return x / norms.clamp_min(eps)


def sincos_position_encoding_1d(length: int, dim: int, dtype, device) -> torch.Tensor:
    """Classic fixed sin/cos encoding, shape (length, dim). dim must be even."""
    position = torch.arange(length, dtype=dtype, device=device).unsqueeze(1)
    div = torch.exp(
        torch.arange(0, dim, 2, dtype=dtype, device=device)
        * (-math.log(10000.0) / dim)
    )
    enc = torch.zeros(length, dim, dtype=dtype, device=device)
    enc[:, 0::2] = torch.sin(position * div)
    enc[:, 1::2] = torch.cos(position * div)
    return enc


def sincos_position_encoding_2d(grid_h: int, grid_w: int, dim: int, dtype, device) -> torch.Tensor:
    """Fixed 2-D position encoding, shape (grid_h * grid_w, dim).

    Half the channels encode the row index, half the column index, which keeps
    the encoder usable at any grid size without learned position parameters.
    """
    half = dim // 2
    enc_h = sincos_position_encoding_1d(grid_h, half, dtype, device)
    enc_w = sincos_position_encoding_1d(grid_w, dim - half, dtype, device)
    rows = enc_h.unsqueeze(1).expand(grid_h, grid_w, half)
    cols = enc_w.unsqueeze(0).expand(grid_h, grid_w, dim - half)
    return torch.cat([rows, cols], dim=-1).reshape(grid_h * grid_w, dim)


class SelfAttention(nn.Module):
    """Multi-head self attention over a token sequence (B, N, dim)."""

    def __init__(self, dim: int, num_heads: int):
        super().__init__()
        if dim % num_heads != 0:
            raise ValidationError(f"embed_dim={dim} not divisible by num_heads={num_heads}")
        self.num_heads = num_heads
        self.head_dim = dim // num_heads
        self.scale = self.head_dim**-0.5
        self.qkv = nn.Linear(dim, dim * 3)
        self.proj = nn.Linear(dim, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, n, d = x.shape
        qkv = self.qkv(x).reshape(b, n, 3, self.num_heads, self.head_dim)
        q, k, v = qkv.permute(2, 0, 3, 1, 4)
        attn = (q @ k.transpose(-2, -1)) * self.scale
        attn = attn.softmax(dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(b, n, d)
        return self.proj(out)


class TransformerBlock(nn.Module):
    def __init__(self, dim: int, num_heads: int, mlp_ratio: float = 2.0):
        super().__init__()
        hidden = int(dim * mlp_ratio)
        self.norm1 = nn.LayerNorm(dim)
        self.attn = SelfAttention(dim, num_heads)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(nn.Linear(dim, hidden), nn.GELU(), nn.Linear(hidden, dim))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x + self.attn(self.norm1(x))
        x = x + self.mlp(self.norm2(x))
        return x


class ImageEncoder(nn.Module):
    """Patch transformer producing a (B, grid_h, grid_w, dim) feature grid."""

    def __init__(self, patch_size: int = 8, dim: int = 32, depth: int = 2, num_heads: int = 4):
        super().__init__()
        self.patch_size = patch_size
        self.dim = dim
        self.patch_embed = nn.Conv2d(3, dim, kernel_size=patch_size, stride=patch_size)
        self.blocks = nn.ModuleList(TransformerBlock(dim, num_heads) for _ in range(depth))
        self.norm = nn.LayerNorm(dim)
        self.proj = nn.Linear(dim, dim)

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        """images: (B, 3, H, W) with H, W divisible by the patch size."""
        if images.ndim != 4 or images.shape[1] != 3:
            raise ValidationError(f"expected images of shape (B, 3, H, W), got {tuple(images.shape)}")
        _, _, h, w = images.shape
        p = self.patch_size
        if h % p != 0 or w % p != 0:
            raise ValidationError(
                f"image size {h}x{w} is not divisible by patch_size={p}; "
                f"crop or pad to a multiple of {p}"
            )
        x = self.patch_embed(images)  # (B, dim, gh, gw)
        b, d, gh, gw = x.shape
        x = x.flatten(2).transpose(1, 2)  # (B, N, dim)
        x = x + sincos_position_encoding_2d(gh, gw, d, x.dtype, x.device)
        for block in self.blocks:
            x = block(x)
        x = self.proj(self.norm(x))
        return x.reshape(b, gh, gw, d)


class PromptBank(nn.Module):
    """Learnable prompt context plus one learnable token per class.

    ``context`` holds the shared context vectors (context_length - 1 of them);
    ``class_tokens`` holds one token per class. Sequences fed to the text
    encoder are ``[context..., class_token_k]``.
    """

    def __init__(self, num_classes: int, context_length: int = 8, dim: int = 32):
        super().__init__()
        if num_classes < 2:
            raise ValidationError(f"num_classes must be >= 2, got {num_classes}")
        if context_length < 2:
            raise ValidationError(f"context_length must be >= 2, got {context_length}")
        self.num_classes = num_classes
        self.context_length = context_length
        self.context = nn.Parameter(torch.zeros(context_length - 1, dim))
        self.class_tokens = nn.Parameter(torch.zeros(num_classes, dim))

    def sequences(self) -> torch.Tensor:
        """Token sequences per class, shape (num_classes, context_length, dim)."""
        k = self.num_classes
        ctx = self.context.unsqueeze(0).expand(k, -1, -1)
        cls = self.class_tokens.unsqueeze(1)
        return torch.cat([ctx, cls], dim=1)


class TextEncoder(nn.Module):
    """Single-block sequence encoder with mean-pool readout.

    Returns one L2-normalized embedding row per class, shape (K, dim).
    """

    def __init__(self, dim: int = 32, num_heads: int = 4, depth: int = 1):
        super().__init__()
        self.dim = dim
        self.blocks = nn.ModuleList(TransformerBlock(dim, num_heads) for _ in range(depth))
        self.norm = nn.LayerNorm(dim)
        self.proj = nn.Linear(dim, dim)

    def forward(self, bank: PromptBank) -> torch.Tensor:
        x = bank.sequences()  # (K, l, dim)
        if x.shape[-1] != self.dim:
            raise ValidationError(
                f"prompt bank width {x.shape[-1]} does not match text encoder width {self.dim}"
            )
        x = x + sincos_position_encoding_1d(x.shape[1], self.dim, x.dtype, x.device)
        for block in self.blocks:
            x = block(x)
        pooled = x.mean(dim=1)
        return normalize_rows(self.proj(self.norm(pooled)))


class DenseUpsampler(nn.Module):
    """Upsample a patch-feature grid to dense per-pixel features.

    Bilinear interpolation by ``factor`` followed by two 3x3 convolutions;
    the channel width is preserved.
    """

    def __init__(self, dim: int = 32, factor: int = 4):
        super().__init__()
        if factor < 1:
            raise ValidationError(f"upsample_factor must be >= 1, got {factor}")
        self.factor = factor
        self.conv1 = nn.Conv2d(dim, dim, kernel_size=3, padding=1)
        self.conv2 = nn.Conv2d(dim, dim, kernel_size=3, padding=1)

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        """features: (B, gh, gw, dim) -> (B, gh * factor, gw * factor, dim)."""
        x = features.permute(0, 3, 1, 2)
        if self.factor > 1:
            x = F.interpolate(x, scale_factor=self.factor, mode="bilinear", align_corners=False)
        x = self.conv2(F.gelu(self.conv1(x)))
        return x.permute(0, 2, 3, 1)
