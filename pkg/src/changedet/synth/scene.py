"""Procedural single-temporal scenes with per-pixel class labels.

A scene is a flat background plus a painter's-algorithm list of objects, each
an axis-aligned rectangle or a blob polygon carrying a category and a texture
seed. Rendering is fully deterministic: the same spec always produces the
same float image and label map, which is what makes controlled edits and
byte-level dataset reproducibility possible downstream.

Categories (index order is part of the file format): background, building,
forest, farmland, water. Buildings are always rectangles.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image, ImageDraw

from ..validation import ValidationError

__all__ = [
    "CATEGORIES",
    "BACKGROUND",
    "BUILDING",
    "RectShape",
    "BlobShape",
    "SceneObject",
    "SceneSpec",
    "rasterize",
    "category_texture",
    "render_scene",
    "visible_masks",
    "sample_scene",
]

CATEGORIES = ("background", "building", "forest", "farmland", "water")
BACKGROUND = 0
BUILDING = 1


@dataclass(frozen=True)
class RectShape:
    """Axis-aligned rectangle over half-open pixel ranges [y0, y1) x [x0, x1)."""

    x0: int
    y0: int
    x1: int
    y1: int


@dataclass(frozen=True)
class BlobShape:
    """Filled polygon; vertices are (x, y) pixel coordinates."""

    points: tuple[tuple[float, float], ...]


@dataclass(frozen=True)
class SceneObject:
    object_id: int
    category: int
    shape: RectShape | BlobShape
    texture_seed: int


@dataclass(frozen=True)
class SceneSpec:
    seed: int
    height: int
    width: int
    objects: tuple[SceneObject, ...]


def _check_spec(spec: SceneSpec) -> None:
    ids = [o.object_id for o in spec.objects]
    if len(ids) != len(set(ids)):
        raise ValidationError("scene objects must have unique object_id values")
    for obj in spec.objects:
        if not 0 <= obj.category < len(CATEGORIES):
            raise ValidationError(
                f"object {obj.object_id} has category {obj.category}, "
                f"expected [0, {len(CATEGORIES)})"
            )
        s = obj.shape
        if isinstance(s, RectShape):
            if not (0 <= s.x0 < s.x1 <= spec.width and 0 <= s.y0 < s.y1 <= spec.height):
                raise ValidationError(
                    f"object {obj.object_id} rectangle {s} lies outside the "
                    f"{spec.height}x{spec.width} canvas"
                )
        elif isinstance(s, BlobShape):
            if len(s.points) < 3:
                raise ValidationError(f"object {obj.object_id} polygon needs >= 3 vertices")
            for x, y in s.points:
                if not (0 <= x <= spec.width - 1 and 0 <= y <= spec.height - 1):
                    raise ValidationError(
                        f"object {obj.object_id} polygon vertex ({x}, {y}) lies outside "
                        f"the {spec.height}x{spec.width} canvas"
                    )
        else:
            raise ValidationError(f"object {obj.object_id} has unsupported shape {type(s)}")


def rasterize(shape: RectShape | BlobShape, height: int, width: int) -> np.ndarray:
    """Boolean pixel mask of a shape on an H x W canvas."""
    if isinstance(shape, RectShape):
        mask = np.zeros((height, width), dtype=bool)
        mask[shape.y0:shape.y1, shape.x0:shape.x1] = True
        return mask
    img = Image.new("L", (width, height), 0)
    ImageDraw.Draw(img).polygon([(float(x), float(y)) for x, y in shape.points], fill=1)
    return np.asarray(img, dtype=np.uint8).astype(bool)


def _texture_rng(texture_seed: int, category: int) -> np.random.Generator:
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence((int(texture_seed), int(category))))
    )


def category_texture(category: int, texture_seed: int, height: int, width: int) -> np.ndarray:
    """Full-canvas texture for a category, deterministic in (seed, category).

    Values are float64 in [0, 1]. Each category has a recognizably different
    palette and structure; the background is a uniform color.
    """
    rng = _texture_rng(texture_seed, category)
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    img = np.zeros((height, width, 3), dtype=np.float64)
    if category == BACKGROUND:
        base = np.array([0.42, 0.45, 0.38]) + rng.uniform(-0.04, 0.04, size=3)
        img[:] = base
    elif category == BUILDING:
        # reddish-gray roofs with a darker seam grid; the tint keeps hue
        # rotations visible on otherwise near-achromatic pixels
        g = rng.uniform(0.45, 0.72)
        img[:] = np.array([g, g * 0.95, g * 0.90])
        period = int(rng.integers(4, 9))
        off_y = int(rng.integers(period))
        off_x = int(rng.integers(period))
        seams = ((yy.astype(int) % period) == off_y) | ((xx.astype(int) % period) == off_x)
        img[seams] -= 0.16
    elif category == 2:  # forest
        base = np.array([0.10, 0.34, 0.12]) + rng.uniform(-0.03, 0.03, size=3)
        img[:] = base
        speckle = rng.normal(0.0, 0.05, size=(height, width, 1))
        img += speckle * np.array([0.4, 1.0, 0.4])
    elif category == 3:  # farmland
        base = np.array([0.58, 0.46, 0.20]) + rng.uniform(-0.04, 0.04, size=3)
        img[:] = base
        theta = rng.uniform(0.0, np.pi)
        period = rng.uniform(4.0, 9.0)
        phase = rng.uniform(0.0, 2 * np.pi)
        stripes = np.sin(2 * np.pi * (xx * np.cos(theta) + yy * np.sin(theta)) / period + phase)
        img += (stripes > 0.0)[..., None] * 0.07
    elif category == 4:  # water
        base = np.array([0.08, 0.22, 0.46]) + rng.uniform(-0.03, 0.03, size=3)
        img[:] = base
        lam = rng.uniform(9.0, 18.0)
        phase = rng.uniform(0.0, 2 * np.pi)
        waves = 0.04 * np.sin(2 * np.pi * (xx + 0.6 * yy) / lam + phase)
        img += waves[..., None]
    else:
        raise ValidationError(f"no texture defined for category {category}")
    return np.clip(img, 0.0, 1.0)


def render_scene(spec: SceneSpec) -> tuple[np.ndarray, np.ndarray]:
    """Paint a spec into (image, labels).

    Objects are painted in list order, so later objects occlude earlier ones;
    the label map records the topmost category per pixel.
    """
    _check_spec(spec)
    img = category_texture(BACKGROUND, spec.seed, spec.height, spec.width)
    labels = np.zeros((spec.height, spec.width), dtype=np.uint8)
    for obj in spec.objects:
        mask = rasterize(obj.shape, spec.height, spec.width)
        tex = category_texture(obj.category, obj.texture_seed, spec.height, spec.width)
        img[mask] = tex[mask]
        labels[mask] = obj.category
    return img, labels


def visible_masks(spec: SceneSpec) -> dict[int, np.ndarray]:
    """Per-object boolean masks of the pixels where the object is topmost."""
    _check_spec(spec)
    owner = np.full((spec.height, spec.width), -1, dtype=np.int64)
    for obj in spec.objects:
        owner[rasterize(obj.shape, spec.height, spec.width)] = obj.object_id
    return {obj.object_id: owner == obj.object_id for obj in spec.objects}


def _sample_blob(rng: np.random.Generator, height: int, width: int) -> BlobShape:
    cx = rng.uniform(8, width - 9)
    cy = rng.uniform(8, height - 9)
    n = int(rng.integers(5, 10))
    angles = np.sort(rng.uniform(0.0, 2 * np.pi, size=n))
    radii = rng.uniform(5.0, min(height, width) * 0.28, size=n)
    xs = np.clip(cx + radii * np.cos(angles), 0, width - 1)
    ys = np.clip(cy + radii * np.sin(angles), 0, height - 1)
    return BlobShape(tuple((float(x), float(y)) for x, y in zip(xs, ys)))


def _sample_rect(rng: np.random.Generator, height: int, width: int,
                 min_side: int, max_side: int) -> RectShape:
    w = int(rng.integers(min_side, max_side + 1))
    h = int(rng.integers(min_side, max_side + 1))
    x0 = int(rng.integers(0, width - w + 1))
    y0 = int(rng.integers(0, height - h + 1))
    return RectShape(x0, y0, x0 + w, y0 + h)


def sample_scene(rng: np.random.Generator, height: int, width: int,
                 num_classes: int = len(CATEGORIES), min_objects: int = 4,
                 max_objects: int = 9, building_fraction: float = 0.35,
                 blob_fraction: float = 0.5) -> SceneSpec:
    """Draw a random scene spec from the configured priors."""
    if not 2 <= num_classes <= len(CATEGORIES):
        raise ValidationError(
            f"num_classes must lie in [2, {len(CATEGORIES)}], got {num_classes}"
        )
    seed = int(rng.integers(0, 2**31 - 1))
    n = int(rng.integers(min_objects, max_objects + 1))
    objects = []
    non_building = [c for c in range(2, num_classes)]
    for i in range(n):
        texture_seed = int(rng.integers(0, 2**31 - 1))
        if rng.random() < building_fraction or not non_building:
            category = BUILDING
            shape: RectShape | BlobShape = _sample_rect(rng, height, width, 6, 18)
        else:
            category = int(rng.choice(non_building))
            if rng.random() < blob_fraction:
                shape = _sample_blob(rng, height, width)
            else:
                shape = _sample_rect(rng, height, width, 8, 26)
        objects.append(SceneObject(i, category, shape, texture_seed))
    return SceneSpec(seed=seed, height=height, width=width, objects=tuple(objects))
