"""Random in-batch pairing baseline and the building-overlap statistic.

The baseline forms pseudo-pairs by deranging a batch of single-temporal
images and labelling change as the XOR of their building masks. Because the
two images come from unrelated scenes, distinct buildings frequently end up
co-located across the pair, a physically impossible configuration. The
overlap statistic quantifies that: the fraction of the building union where
both temporals show building pixels that do not belong to one persistent
object. Edit-based pairs keep buildings fixed, so their statistic is zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..validation import ValidationError, check_binary_mask, check_same_shape
from .edits import PairSample
from .scene import BUILDING

__all__ = [
    "RandomPair",
    "random_derangement",
    "random_pairing",
    "overlap_statistic",
    "pair_overlap_statistic",
]


@dataclass(frozen=True)
class RandomPair:
    img_a: np.ndarray
    img_b: np.ndarray
    mask_a: np.ndarray
    mask_b: np.ndarray
    change: np.ndarray


def random_derangement(n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform random permutation of range(n) without fixed points."""
    if n < 2:
        raise ValidationError(f"need at least 2 items to derange, got {n}")
    while True:
        perm = rng.permutation(n)
        if not np.any(perm == np.arange(n)):
            return perm


def random_pairing(batch: list[tuple[np.ndarray, np.ndarray]],
                   rng: np.random.Generator) -> list[RandomPair]:
    """Pair each (image, building mask) with a deranged partner; change = XOR."""
    if len(batch) < 2:
        raise ValidationError(f"random pairing needs a batch of >= 2, got {len(batch)}")
    masks = []
    for i, (img, mask) in enumerate(batch):
        m = check_binary_mask(mask, f"batch[{i}] mask")
        if img.shape[:2] != m.shape:
            raise ValidationError(
                f"batch[{i}] image {img.shape[:2]} does not match its mask {m.shape}"
            )
        masks.append(m)
    perm = random_derangement(len(batch), rng)
    pairs = []
    for i, j in enumerate(perm):
        pairs.append(
            RandomPair(
                img_a=batch[i][0],
                img_b=batch[j][0],
                mask_a=masks[i],
                mask_b=masks[int(j)],
                change=masks[i] ^ masks[int(j)],
            )
        )
    return pairs


def overlap_statistic(mask_a, mask_b, consistent=None) -> float:
    """Fraction of the mask union covered by inconsistent co-located buildings.

    ``consistent`` marks co-located building pixels known to belong to one
    persistent object; pixels of the intersection outside it count as the
    impossible-overlap numerator. An empty union yields 0.
    """
    a = check_binary_mask(mask_a, "mask_a")
    b = check_binary_mask(mask_b, "mask_b")
    check_same_shape(a, b, "mask_a", "mask_b")
    union = int(np.count_nonzero(a | b))
    if union == 0:
        return 0.0
    overlap = a & b
    if consistent is not None:
        overlap = overlap & ~check_binary_mask(consistent, "consistent")
    return int(np.count_nonzero(overlap)) / union


def pair_overlap_statistic(pair: PairSample | RandomPair) -> float:
    """Overlap statistic of a pair.

    Edit-based pairs never relabel buildings, so co-located building pixels
    are the same persistent object and count as consistent (statistic 0 by
    construction). Random pairs have no persistent objects: every co-located
    building pixel counts.
    """
    if isinstance(pair, RandomPair):
        return overlap_statistic(pair.mask_a, pair.mask_b)
    mask_a = pair.labels_a == BUILDING
    mask_b = pair.labels_b == BUILDING
    return overlap_statistic(mask_a, mask_b, consistent=mask_a & mask_b)
