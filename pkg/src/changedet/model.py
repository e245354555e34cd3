"""Full bi-temporal model: encoders, context fusion, heads and the loss graph."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from .encoders import DenseUpsampler, ImageEncoder, PromptBank, TextEncoder, normalize_rows
from .fusion import DynamicContextFusion
from .heads import ChangeHead, change_bce_loss, combined_loss
from .losses import (
    patch_alignment_loss,
    patch_similarity_labels,
    pixel_text_loss,
    resample_nearest,
    score_map,
    segmentation_logits,
    segmentation_loss,
)
from .validation import ValidationError

__all__ = ["ChangeModel", "build_model", "BatchTargets", "prepare_targets", "compute_losses"]


class ChangeModel(nn.Module):
    """Dual-encoder change detector over image pairs.

    ``forward`` returns every intermediate needed by the losses so ablations
    and tests can inspect the graph. When ``use_fusion`` is off the raw class
    text embeddings feed the score maps directly.
    """

    def __init__(self, patch_size: int = 8, dim: int = 32, num_classes: int = 5,
                 context_length: int = 8, upsample_factor: int = 4,
                 encoder_depth: int = 2, num_heads: int = 4):
        super().__init__()
        if upsample_factor > patch_size:
            raise ValidationError(
                f"upsample_factor={upsample_factor} exceeds patch_size={patch_size}; "
                "dense features would be finer than pixels"
            )
        self.patch_size = patch_size
        self.dim = dim
        self.num_classes = num_classes
        self.upsample_factor = upsample_factor
        self.image_encoder = ImageEncoder(patch_size, dim, depth=encoder_depth, num_heads=num_heads)
        self.prompt_bank = PromptBank(num_classes, context_length, dim)
        self.text_encoder = TextEncoder(dim, num_heads=num_heads, depth=1)
        self.upsampler = DenseUpsampler(dim, upsample_factor)
        self.class_weights = nn.Parameter(torch.zeros(num_classes, dim))
        self.dtco = DynamicContextFusion(dim)
        self.head = ChangeHead(dim, num_classes)

    def text_embeddings(self) -> torch.Tensor:
        return self.text_encoder(self.prompt_bank)

    def forward(self, images_a: torch.Tensor, images_b: torch.Tensor,
                use_fusion: bool = True) -> dict:
        patch_a = self.image_encoder(images_a)
        patch_b = self.image_encoder(images_b)
        dense_a = self.upsampler(patch_a)
        dense_b = self.upsampler(patch_b)
        text = self.text_embeddings()
        if use_fusion:
            text_a = self.dtco(patch_a, text)
            text_b = self.dtco(patch_b, text)
        else:
            b = patch_a.shape[0]
            text_a = text.unsqueeze(0).expand(b, -1, -1)
            text_b = text_a
        scores_a = score_map(dense_a, text_a)
        scores_b = score_map(dense_b, text_b)
        return {
            "patch_a": patch_a,
            "patch_b": patch_b,
            "dense_a": dense_a,
            "dense_b": dense_b,
            "text": text,
            "scores_a": scores_a,
            "scores_b": scores_b,
            "seg_logits_a": segmentation_logits(dense_a, self.class_weights),
            "seg_logits_b": segmentation_logits(dense_b, self.class_weights),
            "change_prob": self.head(dense_a, scores_a, dense_b, scores_b),
        }

    def parameter_groups(self, learning_rate: float, image_encoder_scale: float = 0.1,
                         freeze_text_encoder: bool = True) -> list[dict]:
        """AdamW parameter groups; the image encoder trains at a reduced rate."""
        if freeze_text_encoder:
            for p in self.text_encoder.parameters():
                p.requires_grad_(False)
        rest = [
            p
            for name, p in self.named_parameters()
            if p.requires_grad and not name.startswith("image_encoder.")
        ]
        groups = [{"params": rest, "lr": learning_rate, "base_lr": learning_rate}]
        image_lr = learning_rate * image_encoder_scale
        groups.append(
            {
                "params": list(self.image_encoder.parameters()),
                "lr": image_lr,
                "base_lr": image_lr,
            }
        )
        return groups


def _init_weights(module: nn.Module) -> None:
    """Scaled-Gaussian initialization: std = 1 / sqrt(fan_in), zero biases."""
    if isinstance(module, nn.Linear):
        fan_in = module.weight.shape[1]
        nn.init.normal_(module.weight, std=1.0 / math.sqrt(fan_in))
        if module.bias is not None:
            nn.init.zeros_(module.bias)
    elif isinstance(module, nn.Conv2d):
        fan_in = module.in_channels * module.kernel_size[0] * module.kernel_size[1]
        nn.init.normal_(module.weight, std=1.0 / math.sqrt(fan_in))
        if module.bias is not None:
            nn.init.zeros_(module.bias)


def build_model(patch_size: int = 8, dim: int = 32, num_classes: int = 5,
                context_length: int = 8, upsample_factor: int = 4,
                encoder_depth: int = 2, num_heads: int = 4, seed: int = 0,
                dtype: torch.dtype = torch.float64) -> ChangeModel:
    """Construct a model with deterministic, seeded weight initialization.

    Weights are drawn from fan-in-scaled Gaussians; prompt context and class
    tokens use std 0.02; the fusion adapters' output layers start at zero and
    its channel weight at ones, so fusion begins as an identity on the text
    rows. The caller's global torch RNG state is left untouched.
    """
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        model = ChangeModel(
            patch_size=patch_size,
            dim=dim,
            num_classes=num_classes,
            context_length=context_length,
            upsample_factor=upsample_factor,
            encoder_depth=encoder_depth,
            num_heads=num_heads,
        )
        model.apply(_init_weights)
        nn.init.normal_(model.prompt_bank.context, std=0.02)
        nn.init.normal_(model.prompt_bank.class_tokens, std=0.02)
        nn.init.normal_(model.class_weights, std=1.0 / math.sqrt(dim))
        nn.init.zeros_(model.dtco.visual_adapter.fc2.weight)
        nn.init.zeros_(model.dtco.visual_adapter.fc2.bias)
        nn.init.zeros_(model.dtco.text_adapter.fc2.weight)
        nn.init.zeros_(model.dtco.text_adapter.fc2.bias)
        nn.init.ones_(model.dtco.sigma)
    return model.to(dtype)


@dataclass
class BatchTargets:
    """Supervision targets resampled to the resolutions the losses expect."""

    labels_dense_a: torch.Tensor  # (B, h', w') long
    labels_dense_b: torch.Tensor
    change_dense: torch.Tensor  # (B, h', w') bool
    patch_same: torch.Tensor  # (B, gh, gw) float


def prepare_targets(labels_a: np.ndarray, labels_b: np.ndarray, change: np.ndarray,
                    patch_size: int, upsample_factor: int, num_classes: int,
                    dtype: torch.dtype = torch.float64) -> BatchTargets:
    """Resample per-sample label maps and the change mask for a (B, H, W) batch."""
    la = np.asarray(labels_a)
    lb = np.asarray(labels_b)
    ch = np.asarray(change)
    if la.ndim != 3:
        raise ValidationError(f"expected batched label maps (B, H, W), got {la.shape}")
    b, h, w = la.shape
    gh, gw = h // patch_size, w // patch_size
    dh, dw = gh * upsample_factor, gw * upsample_factor
    dense_a = np.stack([resample_nearest(la[i], dh, dw) for i in range(b)])
    dense_b = np.stack([resample_nearest(lb[i], dh, dw) for i in range(b)])
    change_d = np.stack([resample_nearest(ch[i], dh, dw) for i in range(b)])
    same = np.stack(
        [patch_similarity_labels(la[i], lb[i], gh, gw, num_classes) for i in range(b)]
    )
    return BatchTargets(
        labels_dense_a=torch.from_numpy(dense_a.astype(np.int64)),
        labels_dense_b=torch.from_numpy(dense_b.astype(np.int64)),
        change_dense=torch.from_numpy(change_d.astype(bool)),
        patch_same=torch.from_numpy(same).to(dtype),
    )


def compute_losses(outputs: dict, targets: BatchTargets, alpha: float = 0.1,
                   beta: float = 0.1, enable_lva: bool = True, enable_pca: bool = True,
                   temperature: float = 1.0) -> dict:
    """Evaluate every loss component plus the weighted total.

    Disabled auxiliary terms are reported as exact zeros and contribute
    nothing to the total.
    """
    device = outputs["change_prob"].device
    zero = torch.zeros((), dtype=outputs["change_prob"].dtype, device=device)
    seg = segmentation_loss(
        outputs["seg_logits_a"], outputs["seg_logits_b"],
        targets.labels_dense_a, targets.labels_dense_b,
    )
    change = change_bce_loss(outputs["change_prob"], targets.change_dense)
    if enable_lva:
        lva = patch_alignment_loss(
            normalize_rows(outputs["patch_a"]),
            normalize_rows(outputs["patch_b"]),
            targets.patch_same,
            temperature=temperature,
        )
    else:
        lva = zero
    if enable_pca:
        pca_a = pixel_text_loss(outputs["scores_a"], targets.labels_dense_a)
        pca_b = pixel_text_loss(outputs["scores_b"], targets.labels_dense_b)
    else:
        pca_a = zero
        pca_b = zero
    total = combined_loss(seg, change, lva, pca_a, pca_b, alpha=alpha, beta=beta)
    return {
        "seg": seg,
        "cd": change,
        "lva": lva,
        "pca_a": pca_a,
        "pca_b": pca_b,
        "total": total,
    }
