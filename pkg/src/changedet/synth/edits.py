"""Controlled category edits turning one scene into a pseudo bi-temporal pair.

Non-building objects may change category (forest -> farmland, ...), which
changes both pixels and labels inside the object's visible footprint.
Building objects only ever receive photometric edits (brightness shift, hue
rotation): the pixels move but the labels do not, which is exactly the
pseudo-change a detector must learn to ignore. Everything outside the edited
footprints is re-rendered by the same deterministic functions and therefore
stays bit-identical between the two temporals.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace

import numpy as np

from ..validation import ValidationError
from .scene import BUILDING, CATEGORIES, SceneSpec, render_scene, visible_masks

__all__ = [
    "CategoryChange",
    "Photometric",
    "EditPlan",
    "PairSample",
    "MAX_BRIGHTNESS_DELTA",
    "MAX_HUE_DEGREES",
    "plan_digest",
    "apply_edits",
    "sample_plan",
    "hue_rotation_matrix",
]

MAX_BRIGHTNESS_DELTA = 0.3
MAX_HUE_DEGREES = 30.0


@dataclass(frozen=True)
class CategoryChange:
    target: int


@dataclass(frozen=True)
class Photometric:
    brightness: float
    hue_degrees: float


@dataclass(frozen=True)
class EditPlan:
    """Edits keyed by object id; objects without an entry are untouched."""

    edits: tuple[tuple[int, CategoryChange | Photometric], ...]


@dataclass(frozen=True)
class PairSample:
    """A pseudo bi-temporal pair with labels, change mask and provenance."""

    img_a: np.ndarray
    img_b: np.ndarray
    labels_a: np.ndarray
    labels_b: np.ndarray
    change: np.ndarray
    scene_seed: int
    plan_digest: str


def plan_digest(plan: EditPlan) -> str:
    """Stable hex digest of a plan's canonical JSON form."""
    payload = [
        [oid, type(edit).__name__, sorted(vars(edit).items())]
        for oid, edit in sorted(plan.edits)
    ]
    return hashlib.sha256(json.dumps(payload).encode()).hexdigest()[:16]


def _validate_plan(spec: SceneSpec, plan: EditPlan) -> None:
    known = {o.object_id: o for o in spec.objects}
    seen = set()
    for oid, edit in plan.edits:
        if oid not in known:
            raise ValidationError(f"edit plan references unknown object id {oid}")
        if oid in seen:
            raise ValidationError(f"edit plan holds multiple edits for object id {oid}")
        seen.add(oid)
        obj = known[oid]
        if isinstance(edit, CategoryChange):
            if obj.category == BUILDING:
                raise ValidationError(
                    f"object {oid} is a building; buildings only take photometric edits"
                )
            if not 0 <= edit.target < len(CATEGORIES):
                raise ValidationError(
                    f"edit on object {oid} targets category {edit.target}, "
                    f"expected [0, {len(CATEGORIES)})"
                )
            if edit.target == BUILDING:
                raise ValidationError(
                    f"edit on object {oid} targets the building category; building "
                    "labels must be identical across the pair"
                )
        elif isinstance(edit, Photometric):
            if obj.category != BUILDING:
                raise ValidationError(
                    f"object {oid} is {CATEGORIES[obj.category]}; photometric edits "
                    "apply to buildings only"
                )
            if abs(edit.brightness) > MAX_BRIGHTNESS_DELTA:
                raise ValidationError(
                    f"brightness delta {edit.brightness} exceeds +/-{MAX_BRIGHTNESS_DELTA}"
                )
            if abs(edit.hue_degrees) > MAX_HUE_DEGREES:
                raise ValidationError(
                    f"hue rotation {edit.hue_degrees} exceeds +/-{MAX_HUE_DEGREES} degrees"
                )
        else:
            raise ValidationError(f"unsupported edit type {type(edit)} on object {oid}")


def hue_rotation_matrix(degrees: float) -> np.ndarray:
    """RGB hue-rotation matrix (the SVG feColorMatrix hueRotate coefficients)."""
    angle = np.deg2rad(degrees)
    c, s = np.cos(angle), np.sin(angle)
    return np.array(
        [
            [0.213 + 0.787 * c - 0.213 * s, 0.715 - 0.715 * c - 0.715 * s, 0.072 - 0.072 * c + 0.928 * s],
            [0.213 - 0.213 * c + 0.143 * s, 0.715 + 0.285 * c + 0.140 * s, 0.072 - 0.072 * c - 0.283 * s],
            [0.213 - 0.213 * c - 0.787 * s, 0.715 - 0.715 * c + 0.715 * s, 0.072 + 0.928 * c + 0.072 * s],
        ]
    )


def apply_edits(spec: SceneSpec, plan: EditPlan) -> PairSample:
    """Render the pair (original, edited) and derive labels and change mask.

    Category edits re-render the edited objects with their new category;
    photometric edits post-process the object's visible pixels. The change
    mask is the pixelwise label inequality, so photometric edits never mark
    change.
    """
    _validate_plan(spec, plan)
    edits = dict(plan.edits)
    img_a, labels_a = render_scene(spec)

    edited_objects = tuple(
        replace(obj, category=edits[obj.object_id].target)
        if isinstance(edits.get(obj.object_id), CategoryChange)
        else obj
        for obj in spec.objects
    )
    spec_b = SceneSpec(spec.seed, spec.height, spec.width, edited_objects)
    img_b, labels_b = render_scene(spec_b)

    photometric = {oid: e for oid, e in plan.edits if isinstance(e, Photometric)}
    if photometric:
        masks = visible_masks(spec_b)
        for oid, edit in photometric.items():
            region = masks[oid]
            pixels = img_b[region]
            if edit.hue_degrees:
                pixels = pixels @ hue_rotation_matrix(edit.hue_degrees).T
            pixels = pixels + edit.brightness
            img_b[region] = np.clip(pixels, 0.0, 1.0)

    return PairSample(
        img_a=img_a,
        img_b=img_b,
        labels_a=labels_a,
        labels_b=labels_b,
        change=labels_a != labels_b,
        scene_seed=spec.seed,
        plan_digest=plan_digest(plan),
    )


def sample_plan(spec: SceneSpec, rng: np.random.Generator, num_classes: int,
                edit_rate: float = 0.5, min_brightness: float = 0.08,
                max_brightness: float = MAX_BRIGHTNESS_DELTA,
                max_hue_degrees: float = MAX_HUE_DEGREES) -> EditPlan:
    """Draw a random plan: category swaps for non-buildings, photometric for buildings."""
    edits: list[tuple[int, CategoryChange | Photometric]] = []
    allowed = [c for c in range(num_classes) if c != BUILDING]
    for obj in spec.objects:
        if rng.random() >= edit_rate:
            continue
        if obj.category == BUILDING:
            magnitude = rng.uniform(min_brightness, max_brightness)
            sign = 1.0 if rng.random() < 0.5 else -1.0
            hue = rng.uniform(-max_hue_degrees, max_hue_degrees)
            edits.append((obj.object_id, Photometric(sign * magnitude, float(hue))))
        else:
            targets = [c for c in allowed if c != obj.category]
            if targets:
                edits.append((obj.object_id, CategoryChange(int(rng.choice(targets)))))
    return EditPlan(tuple(edits))
