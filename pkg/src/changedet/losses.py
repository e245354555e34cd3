"""Alignment and supervision losses on encoder features.

Three families:

* patch alignment: a binary cross-entropy on the per-patch cosine between the
  two temporals, supervised by whether the patch holds the same majority class
  in both label maps;
* K-way segmentation: linear classification of dense features against a
  learnable class-weight matrix, cross-entropy per temporal;
* pixel-text alignment: per-pixel cosine *distances* to the class text rows
  form a score map; a softmax over negated distances gives class probabilities
  so that shrinking the true-class distance shrinks the loss.

Label maps are brought to dense resolution with nearest-neighbor indexing
(source index = floor(i * src_size / dst_size)), which keeps every test exact.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F

from .encoders import normalize_rows
from .validation import ValidationError, check_label_map, check_same_shape

__all__ = [
    "LOG_EPS",
    "nearest_resample_indices",
    "resample_nearest",
    "patch_similarity_labels",
    "patch_alignment_loss",
    "segmentation_logits",
    "segmentation_loss",
    "score_map",
    "pixel_text_loss",
]

LOG_EPS = 1e-7


def nearest_resample_indices(src_size: int, dst_size: int) -> np.ndarray:
    """Source index per destination index: floor(i * src / dst)."""
    return (np.arange(dst_size) * src_size) // dst_size


def resample_nearest(arr: np.ndarray, dst_h: int, dst_w: int) -> np.ndarray:
    """Nearest-neighbor resample of a 2-D array to (dst_h, dst_w)."""
    if arr.ndim != 2:
        raise ValidationError(f"expected a 2-D map, got shape {arr.shape}")
    rows = nearest_resample_indices(arr.shape[0], dst_h)
    cols = nearest_resample_indices(arr.shape[1], dst_w)
    return arr[np.ix_(rows, cols)]


def patch_similarity_labels(labels_a, labels_b, grid_h: int, grid_w: int,
                            num_classes: int) -> np.ndarray:
    """Per-patch indicator that both temporals hold the same majority class.

    Each label map is split into a grid_h x grid_w grid of equal blocks; the
    majority class is computed per block and temporal (ties broken toward the
    smaller class index). Returns a uint8 grid with 1 where the majorities
    agree. Symmetric in the two temporals.
    """
    la = check_label_map(labels_a, num_classes, "labels_a")
    lb = check_label_map(labels_b, num_classes, "labels_b")
    check_same_shape(la, lb, "labels_a", "labels_b")
    h, w = la.shape
    if h % grid_h != 0 or w % grid_w != 0:
        raise ValidationError(
            f"label maps of {h}x{w} cannot be split into a {grid_h}x{grid_w} patch grid"
        )

    def majority(labels: np.ndarray) -> np.ndarray:
        blocks = labels.reshape(grid_h, h // grid_h, grid_w, w // grid_w)
        counts = np.stack(
            [(blocks == k).sum(axis=(1, 3)) for k in range(num_classes)], axis=0
        )
        # argmax returns the first maximum, i.e. the smaller class index on ties
        return counts.argmax(axis=0)

    return (majority(la) == majority(lb)).astype(np.uint8)


def patch_alignment_loss(feat_a: torch.Tensor, feat_b: torch.Tensor,
                         same_label: torch.Tensor, temperature: float = 1.0) -> torch.Tensor:
    """BCE on the per-patch cosine between normalized patch features.

    The raw cosine in [-1, 1] is divided by ``temperature``, mapped affinely
    to [0, 1] and clamped away from the log singularities, then treated as the
    probability that the patch is unchanged.
    """
    if feat_a.shape != feat_b.shape:
        raise ValidationError(
            f"patch features must share a shape, got {tuple(feat_a.shape)} vs {tuple(feat_b.shape)}"
        )
    if same_label.shape != feat_a.shape[:-1]:
        raise ValidationError(
            f"similarity labels {tuple(same_label.shape)} do not match the "
            f"patch grid {tuple(feat_a.shape[:-1])}"
        )
    cos = (feat_a * feat_b).sum(dim=-1)
    d = ((cos / temperature) + 1.0) / 2.0
    d = d.clamp(LOG_EPS, 1.0 - LOG_EPS)
    y = same_label.to(d.dtype)
    return -(y * d.log() + (1.0 - y) * (1.0 - d).log()).mean()


def segmentation_logits(dense: torch.Tensor, class_weights: torch.Tensor) -> torch.Tensor:
    """Per-pixel class logits <w_k, f_i>; dense (..., dim) x weights (K, dim)."""
    if dense.shape[-1] != class_weights.shape[-1]:
        raise ValidationError(
            f"feature width {dense.shape[-1]} does not match classifier width "
            f"{class_weights.shape[-1]}"
        )
    return dense @ class_weights.transpose(0, 1)


def segmentation_loss(logits_a: torch.Tensor, logits_b: torch.Tensor,
                      labels_a: torch.Tensor, labels_b: torch.Tensor) -> torch.Tensor:
    """Sum over the two temporals of the pixel-averaged cross-entropy."""
    k = logits_a.shape[-1]
    for name, labels in (("labels_a", labels_a), ("labels_b", labels_b)):
        if labels.numel() and int(labels.max()) >= k:
            raise ValidationError(f"{name} contains class index >= num_classes={k}")
    loss_a = F.cross_entropy(logits_a.reshape(-1, k), labels_a.reshape(-1))
    loss_b = F.cross_entropy(logits_b.reshape(-1, k), labels_b.reshape(-1))
    return loss_a + loss_b


def score_map(dense: torch.Tensor, text_embeddings: torch.Tensor) -> torch.Tensor:
    """Cosine distance 1 - cos(f_i, t_k) between pixels and class text rows.

    dense: (B, h, w, dim); text_embeddings: (K, dim) or per-image (B, K, dim).
    Both sides are row-normalized here, so values lie in [0, 2] and the
    per-pixel argmin over classes equals the argmax of the cosine.
    """
    if dense.shape[-1] != text_embeddings.shape[-1]:
        raise ValidationError(
            f"feature width {dense.shape[-1]} does not match text width "
            f"{text_embeddings.shape[-1]}"
        )
    dn = normalize_rows(dense)
    tn = normalize_rows(text_embeddings)
    if text_embeddings.ndim == 2:
        cos = dn @ tn.transpose(0, 1)
    elif text_embeddings.ndim == 3:
        cos = torch.einsum("bhwd,bkd->bhwk", dn, tn)
    else:
        raise ValidationError(
            f"text embeddings must be (K, dim) or (B, K, dim), got {tuple(text_embeddings.shape)}"
        )
    return (1.0 - cos).clamp(0.0, 2.0)


def pixel_text_loss(scores: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Cross-entropy of softmax(-scores) against the true class per pixel."""
    k = scores.shape[-1]
    if labels.shape != scores.shape[:-1]:
        raise ValidationError(
            f"label map {tuple(labels.shape)} does not match score map "
            f"{tuple(scores.shape[:-1])}"
        )
    if labels.numel() and int(labels.max()) >= k:
        raise ValidationError(f"labels contain class index >= num_classes={k}")
    return F.cross_entropy((-scores).reshape(-1, k), labels.reshape(-1))
