"""Dynamic fusion of visual features into the class text embeddings.

Class text rows attend (single-head cross-attention) over the patch tokens
plus a mean-pooled summary token, producing a visually conditioned residual
``z``. Two gated adapters and a learnable per-channel weight combine it with
the original text rows:

    fused = visual_adapter(z) * t + text_adapter(t) * z + sigma * t

Both adapter MLPs have zero-initialized output layers and ``sigma`` starts at
all-ones, so a freshly built module is an exact identity on the text rows and
training departs from the base prompts gradually.
"""

from __future__ import annotations

import torch
import torch.nn as nn

from .validation import ValidationError

__all__ = ["DynamicContextFusion", "pool_patch_features"]


def pool_patch_features(features: torch.Tensor) -> torch.Tensor:
    """Mean over all patch positions, per channel.

    Accepts (gh, gw, dim) or (B, gh, gw, dim); returns (dim,) or (B, dim).
    """
    if features.ndim == 3:
        return features.mean(dim=(0, 1))
    if features.ndim == 4:
        return features.mean(dim=(1, 2))
    raise ValidationError(f"expected a patch-feature grid, got shape {tuple(features.shape)}")


class _Adapter(nn.Module):
    """Two-layer MLP gate; the output layer is zero-initialized by the builder."""

    def __init__(self, dim: int):
        super().__init__()
        self.fc1 = nn.Linear(dim, dim)
        self.fc2 = nn.Linear(dim, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc2(torch.nn.functional.gelu(self.fc1(x)))


class DynamicContextFusion(nn.Module):
    def __init__(self, dim: int):
        super().__init__()
        self.dim = dim
        self.scale = dim**-0.5
        self.query = nn.Linear(dim, dim)
        self.key = nn.Linear(dim, dim)
        self.value = nn.Linear(dim, dim)
        self.visual_adapter = _Adapter(dim)
        self.text_adapter = _Adapter(dim)
        self.sigma = nn.Parameter(torch.ones(dim))

    def forward(self, patch_features: torch.Tensor, text_embeddings: torch.Tensor) -> torch.Tensor:
        """Fuse per-image visual context into the class text rows.

        patch_features: (B, gh, gw, dim); text_embeddings: (K, dim).
        Returns per-image conditioned text rows, shape (B, K, dim).
        """
        if patch_features.ndim != 4:
            raise ValidationError(
                f"expected patch features (B, gh, gw, dim), got {tuple(patch_features.shape)}"
            )
        if text_embeddings.ndim != 2:
            raise ValidationError(
                f"expected text embeddings (K, dim), got {tuple(text_embeddings.shape)}"
            )
        if patch_features.shape[-1] != self.dim or text_embeddings.shape[-1] != self.dim:
            raise ValidationError(
                "embedding width mismatch: visual "
                f"{patch_features.shape[-1]}, text {text_embeddings.shape[-1]}, "
                f"fusion {self.dim}"
            )
        b = patch_features.shape[0]
        tokens = patch_features.reshape(b, -1, self.dim)
        pooled = tokens.mean(dim=1, keepdim=True)
        visual = torch.cat([tokens, pooled], dim=1)  # (B, N + 1, dim)

        q = self.query(text_embeddings)  # (K, dim), shared across the batch
        k = self.key(visual)
        v = self.value(visual)
        attn = torch.einsum("kd,bnd->bkn", q, k) * self.scale
        z = torch.einsum("bkn,bnd->bkd", attn.softmax(dim=-1), v)

        t = text_embeddings.unsqueeze(0).expand(b, -1, -1)
        return self.visual_adapter(z) * t + self.text_adapter(t) * z + self.sigma * t
