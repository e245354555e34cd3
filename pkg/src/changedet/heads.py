"""Change-detection head and the combined training objective."""

from __future__ import annotations

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .losses import LOG_EPS, nearest_resample_indices
from .validation import ValidationError

__all__ = [
    "ChangeHead",
    "change_bce_loss",
    "combined_loss",
    "upsample_probability",
    "probability_to_mask",
]

CHANGE_THRESHOLD = 0.5


class ChangeHead(nn.Module):
    """Two 3x3 convolutions over the concatenated dense features and score maps.

    Input channels are 2 * dim + 2 * num_classes (features and scores for both
    temporals); a channel softmax yields the changed-class probability map.
    """

    def __init__(self, dim: int, num_classes: int, hidden: int = 32):
        super().__init__()
        self.dim = dim
        self.num_classes = num_classes
        in_channels = 2 * dim + 2 * num_classes
        self.conv1 = nn.Conv2d(in_channels, hidden, kernel_size=3, padding=1)
        self.conv2 = nn.Conv2d(hidden, 2, kernel_size=3, padding=1)

    def forward(self, dense_a: torch.Tensor, scores_a: torch.Tensor,
                dense_b: torch.Tensor, scores_b: torch.Tensor) -> torch.Tensor:
        """All inputs are (B, h, w, C); returns probabilities (B, h, w) in [0, 1]."""
        spatial = dense_a.shape[:3]
        for name, t in (("scores_a", scores_a), ("dense_b", dense_b), ("scores_b", scores_b)):
            if t.shape[:3] != spatial:
                raise ValidationError(
                    f"{name} spatial shape {tuple(t.shape[:3])} does not match "
                    f"dense_a {tuple(spatial)}"
                )
        x = torch.cat([dense_a, scores_a, dense_b, scores_b], dim=-1)
        x = x.permute(0, 3, 1, 2)
        x = self.conv2(F.relu(self.conv1(x)))
        return x.softmax(dim=1)[:, 1]


def change_bce_loss(prob: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Pixel-mean binary cross-entropy of a change-probability map.

    Probabilities are clamped away from {0, 1} so the loss stays finite.
    """
    if prob.shape != target.shape:
        raise ValidationError(
            f"probability map {tuple(prob.shape)} does not match target {tuple(target.shape)}"
        )
    p = prob.clamp(LOG_EPS, 1.0 - LOG_EPS)
    y = target.to(p.dtype)
    return -(y * p.log() + (1.0 - y) * (1.0 - p).log()).mean()


def combined_loss(seg: torch.Tensor, change: torch.Tensor, patch_align: torch.Tensor,
                  pixel_text_a: torch.Tensor, pixel_text_b: torch.Tensor,
                  alpha: float = 0.1, beta: float = 0.1) -> torch.Tensor:
    """Main losses at weight 1 plus the weighted auxiliary alignment terms."""
    if alpha < 0 or beta < 0:
        raise ValidationError(f"loss weights must be non-negative, got alpha={alpha}, beta={beta}")
    return seg + change + alpha * patch_align + beta * (pixel_text_a + pixel_text_b)


def upsample_probability(prob: np.ndarray, height: int, width: int) -> np.ndarray:
    """Nearest-neighbor upsample of a dense probability map to full resolution."""
    if prob.ndim != 2:
        raise ValidationError(f"expected a 2-D probability map, got shape {prob.shape}")
    rows = nearest_resample_indices(prob.shape[0], height)
    cols = nearest_resample_indices(prob.shape[1], width)
    return prob[np.ix_(rows, cols)]


def probability_to_mask(prob: np.ndarray, threshold: float = CHANGE_THRESHOLD) -> np.ndarray:
    """Threshold a probability map into a boolean change mask (>= threshold)."""
    return np.asarray(prob) >= threshold
