"""On-disk pseudo-pair datasets.

Layout under the dataset root:

* ``pairs/<id>_a.png``, ``pairs/<id>_b.png``: 8-bit RGB images
* ``labels/<id>_a.png``, ``labels/<id>_b.png``: single-channel class indices
* ``change/<id>.png``: single-channel change mask, 0 = unchanged, 255 = changed
* ``manifest.json``: format version, generator config, per-sample seeds and
  edit-plan digests

Every sample is derived from ``(master seed, sample index)`` through a seed
sequence, so the whole tree regenerates byte-identically from the manifest.
File writes go through a temp file plus rename, so a crash never leaves a
truncated sample behind.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np
from PIL import Image

from ..config import GeneratorConfig
from .edits import PairSample, apply_edits, sample_plan
from .scene import SceneSpec, sample_scene

__all__ = [
    "MANIFEST_FORMAT_VERSION",
    "MANIFEST_SCHEMA",
    "DatasetError",
    "sample_pair",
    "generate_dataset",
    "load_manifest",
    "load_dataset",
    "regenerate_pair",
]

MANIFEST_FORMAT_VERSION = 1

MANIFEST_SCHEMA = {
    "type": "object",
    "properties": {
        "format_version": {"const": MANIFEST_FORMAT_VERSION},
        "master_seed": {"type": "integer", "minimum": 0},
        "num_classes": {"type": "integer", "minimum": 2},
        "image_size": {"type": "integer", "minimum": 16},
        "count": {"type": "integer", "minimum": 1},
        "generator": {"type": "object"},
        "samples": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "id": {"type": "string"},
                    "index": {"type": "integer", "minimum": 0},
                    "scene_seed": {"type": "integer"},
                    "plan_digest": {"type": "string"},
                },
                "required": ["id", "index", "scene_seed", "plan_digest"],
                "additionalProperties": False,
            },
        },
    },
    "required": ["format_version", "master_seed", "num_classes", "image_size",
                 "count", "generator", "samples"],
    "additionalProperties": False,
}


class DatasetError(RuntimeError):
    """Raised when a dataset directory is missing files or inconsistent."""


def _sample_rng(master_seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((master_seed, index))))


def sample_pair(config: GeneratorConfig, index: int) -> tuple[SceneSpec, PairSample]:
    """Draw the scene and edit plan for one sample index and apply them."""
    rng = _sample_rng(config.seed, index)
    spec = sample_scene(
        rng,
        height=config.image_size,
        width=config.image_size,
        num_classes=config.num_classes,
        min_objects=config.min_objects,
        max_objects=config.max_objects,
        building_fraction=config.building_fraction,
        blob_fraction=config.blob_fraction,
    )
    plan = sample_plan(
        spec,
        rng,
        num_classes=config.num_classes,
        edit_rate=config.edit_rate,
        min_brightness=config.min_brightness,
        max_brightness=config.max_brightness,
        max_hue_degrees=config.max_hue_degrees,
    )
    return spec, apply_edits(spec, plan)


def _write_png(path: Path, array: np.ndarray, mode: str) -> None:
    tmp = path.with_suffix(".png.tmp")
    Image.fromarray(array, mode=mode).save(tmp, format="PNG")
    os.replace(tmp, path)


def image_to_uint8(img: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)


def generate_dataset(config: GeneratorConfig, out_dir) -> dict:
    """Generate ``config.count`` pairs under ``out_dir``; returns the manifest."""
    config.validate()
    root = Path(out_dir)
    try:
        for sub in ("pairs", "labels", "change"):
            (root / sub).mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DatasetError(f"cannot create dataset directories under {root}: {exc}") from exc

    samples = []
    for index in range(config.count):
        sample_id = f"{index:05d}"
        _, pair = sample_pair(config, index)
        try:
            _write_png(root / "pairs" / f"{sample_id}_a.png", image_to_uint8(pair.img_a), "RGB")
            _write_png(root / "pairs" / f"{sample_id}_b.png", image_to_uint8(pair.img_b), "RGB")
            _write_png(root / "labels" / f"{sample_id}_a.png", pair.labels_a, "L")
            _write_png(root / "labels" / f"{sample_id}_b.png", pair.labels_b, "L")
            _write_png(
                root / "change" / f"{sample_id}.png",
                pair.change.astype(np.uint8) * 255, "L",
            )
        except OSError as exc:
            raise DatasetError(f"failed writing sample {sample_id} under {root}: {exc}") from exc
        samples.append(
            {
                "id": sample_id,
                "index": index,
                "scene_seed": pair.scene_seed,
                "plan_digest": pair.plan_digest,
            }
        )

    manifest = {
        "format_version": MANIFEST_FORMAT_VERSION,
        "master_seed": config.seed,
        "num_classes": config.num_classes,
        "image_size": config.image_size,
        "count": config.count,
        "generator": {k: v for k, v in vars(config).items()},
        "samples": samples,
    }
    jsonschema.validate(manifest, MANIFEST_SCHEMA)
    tmp = root / "manifest.json.tmp"
    try:
        tmp.write_text(json.dumps(manifest, indent=1, sort_keys=True))
        os.replace(tmp, root / "manifest.json")
    except OSError as exc:
        raise DatasetError(f"failed writing manifest under {root}: {exc}") from exc
    return manifest


def load_manifest(root) -> dict:
    path = Path(root) / "manifest.json"
    try:
        manifest = json.loads(path.read_text())
    except OSError as exc:
        raise DatasetError(f"cannot read dataset manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DatasetError(f"dataset manifest {path} is not valid JSON: {exc}") from exc
    try:
        jsonschema.validate(manifest, MANIFEST_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise DatasetError(f"dataset manifest {path} fails schema validation: {exc.message}")
    return manifest


@dataclass(frozen=True)
class LoadedPair:
    """One dataset sample as consumed by training and evaluation."""

    sample_id: str
    img_a: np.ndarray
    img_b: np.ndarray
    labels_a: np.ndarray
    labels_b: np.ndarray
    change: np.ndarray


def load_dataset(root) -> list[LoadedPair]:
    """Read every sample listed in the manifest back into arrays."""
    rootp = Path(root)
    manifest = load_manifest(rootp)
    pairs = []
    for entry in manifest["samples"]:
        sid = entry["id"]
        try:
            img_a = _read_rgb(rootp / "pairs" / f"{sid}_a.png")
            img_b = _read_rgb(rootp / "pairs" / f"{sid}_b.png")
            labels_a = _read_gray(rootp / "labels" / f"{sid}_a.png")
            labels_b = _read_gray(rootp / "labels" / f"{sid}_b.png")
            change = _read_gray(rootp / "change" / f"{sid}.png")
        except OSError as exc:
            raise DatasetError(f"dataset sample {sid} unreadable under {rootp}: {exc}") from exc
        k = manifest["num_classes"]
        if labels_a.max() >= k or labels_b.max() >= k:
            raise DatasetError(f"sample {sid} holds class indices >= num_classes={k}")
        pairs.append(
            LoadedPair(
                sample_id=sid,
                img_a=img_a,
                img_b=img_b,
                labels_a=labels_a.astype(np.int64),
                labels_b=labels_b.astype(np.int64),
                change=change >= 128,
            )
        )
    return pairs


def regenerate_pair(manifest: dict, index: int) -> tuple[SceneSpec, PairSample]:
    """Re-derive a sample from the manifest and verify its provenance fields."""
    config = GeneratorConfig(**manifest["generator"])
    spec, pair = sample_pair(config, index)
    entry = manifest["samples"][index]
    if entry["scene_seed"] != pair.scene_seed or entry["plan_digest"] != pair.plan_digest:
        raise DatasetError(
            f"sample {entry['id']} does not match its manifest provenance; "
            "the dataset was not produced by this generator version"
        )
    return spec, pair


def _read_rgb(path: Path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0


def _read_gray(path: Path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("L"))
