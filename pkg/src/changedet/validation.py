"""Input validation helpers shared across the package.

All checks raise :class:`ValidationError` (a ``ValueError``) with a message
that names the offending argument, so callers can surface actionable errors
from the CLI and the estimator alike.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "ValidationError",
    "check_image",
    "check_label_map",
    "check_binary_mask",
    "check_same_shape",
    "check_divisible",
]


class ValidationError(ValueError):
    """Raised when an input array violates a documented invariant."""


def check_image(img, name: str = "image") -> np.ndarray:
    """Validate an H x W x 3 float image with values in [0, 1]."""
    arr = np.asarray(img)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValidationError(f"{name} must have shape (H, W, 3), got {arr.shape}")
    arr = arr.astype(np.float64, copy=False)
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValidationError(
            f"{name} values must lie in [0, 1], got range "
            f"[{arr.min():.4g}, {arr.max():.4g}]"
        )
    return arr


def check_label_map(labels, num_classes: int, name: str = "labels") -> np.ndarray:
    """Validate an H x W integer class-index map with values in [0, num_classes)."""
    arr = np.asarray(labels)
    if arr.ndim != 2:
        raise ValidationError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(arr == arr.astype(np.int64)):
            raise ValidationError(f"{name} must hold integer class indices")
        arr = arr.astype(np.int64)
    if arr.size and (arr.min() < 0 or arr.max() >= num_classes):
        raise ValidationError(
            f"{name} indices must lie in [0, {num_classes}), got range "
            f"[{arr.min()}, {arr.max()}]"
        )
    return arr.astype(np.int64, copy=False)


def check_binary_mask(mask, name: str = "mask") -> np.ndarray:
    """Validate an H x W binary mask; returns a bool array."""
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise ValidationError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.dtype != np.bool_:
        uniq = np.unique(arr)
        if not np.all(np.isin(uniq, (0, 1))):
            raise ValidationError(f"{name} must be binary, found values {uniq[:8]}")
        arr = arr.astype(bool)
    return arr


def check_same_shape(a: np.ndarray, b: np.ndarray, name_a: str, name_b: str) -> None:
    if a.shape != b.shape:
        raise ValidationError(
            f"{name_a} and {name_b} must share a shape, got {a.shape} vs {b.shape}"
        )


def check_divisible(value: int, divisor: int, name: str) -> None:
    if value % divisor != 0:
        raise ValidationError(
            f"{name}={value} is not divisible by {divisor}; "
            f"pick a size that is a multiple of {divisor}"
        )
