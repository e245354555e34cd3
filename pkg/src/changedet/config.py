"""Run and generator configuration: defaults, JSON schema, validation.

Config files are JSON with a mandatory ``format_version`` and two optional
sections, ``run`` (model + training) and ``generator`` (synthetic dataset).
Unknown keys are rejected so typos fail loudly; CLI flags override file
values. ``parse -> serialize -> parse`` is the identity.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import jsonschema

__all__ = [
    "ConfigError",
    "RunConfig",
    "GeneratorConfig",
    "Config",
    "CONFIG_FORMAT_VERSION",
    "CONFIG_SCHEMA",
    "parse_config",
    "config_to_dict",
    "load_config",
    "save_config",
]

CONFIG_FORMAT_VERSION = 1


class ConfigError(ValueError):
    """Raised for malformed or out-of-range configuration values."""


@dataclass
class RunConfig:
    """Model and training settings.

    The auxiliary-loss switches (``enable_lva`` for patch alignment,
    ``enable_pca`` for pixel-text alignment, ``enable_dtco`` for dynamic
    context fusion) exist for ablations; a disabled loss is logged as 0.
    """

    seed: int = 7
    image_size: int = 64
    patch_size: int = 8
    embed_dim: int = 32
    num_classes: int = 5
    context_length: int = 8
    upsample_factor: int = 4
    alpha: float = 0.1
    beta: float = 0.1
    temperature: float = 1.0
    learning_rate: float = 1e-4
    weight_decay: float = 0.01
    steps: int = 1500
    batch_size: int = 8
    enable_lva: bool = True
    enable_pca: bool = True
    enable_dtco: bool = True
    freeze_text_encoder: bool = True
    image_encoder_lr_scale: float = 0.1
    poly_decay: bool = True
    poly_power: float = 0.9
    random_flip: bool = False
    random_crop: bool = False
    crop_size: int | None = None
    pair_swap: bool = False
    num_threads: int = 1
    log_every: int = 50
    train_data: str | None = None
    eval_data: str | None = None

    def validate(self) -> "RunConfig":
        _require(self.seed >= 0, "seed", "must be >= 0", self.seed)
        _require(self.image_size >= 16, "image_size", "must be >= 16", self.image_size)
        _require(self.patch_size >= 2, "patch_size", "must be >= 2", self.patch_size)
        _require(
            self.image_size % self.patch_size == 0,
            "image_size", f"must be divisible by patch_size={self.patch_size}", self.image_size,
        )
        _require(self.embed_dim >= 8, "embed_dim", "must be >= 8", self.embed_dim)
        _require(self.embed_dim % 4 == 0, "embed_dim", "must be divisible by 4", self.embed_dim)
        _require(self.num_classes >= 2, "num_classes", "must be >= 2", self.num_classes)
        _require(self.context_length >= 2, "context_length", "must be >= 2", self.context_length)
        _require(
            1 <= self.upsample_factor <= self.patch_size,
            "upsample_factor", f"must lie in [1, patch_size={self.patch_size}]",
            self.upsample_factor,
        )
        _require(self.alpha >= 0, "alpha", "must be >= 0", self.alpha)
        _require(self.beta >= 0, "beta", "must be >= 0", self.beta)
        _require(self.temperature > 0, "temperature", "must be > 0", self.temperature)
        _require(self.learning_rate > 0, "learning_rate", "must be > 0", self.learning_rate)
        _require(self.weight_decay >= 0, "weight_decay", "must be >= 0", self.weight_decay)
        _require(self.steps >= 1, "steps", "must be >= 1", self.steps)
        _require(self.batch_size >= 1, "batch_size", "must be >= 1", self.batch_size)
        _require(0 < self.image_encoder_lr_scale <= 1, "image_encoder_lr_scale",
                 "must lie in (0, 1]", self.image_encoder_lr_scale)
        _require(self.poly_power > 0, "poly_power", "must be > 0", self.poly_power)
        _require(self.num_threads >= 1, "num_threads", "must be >= 1", self.num_threads)
        _require(self.log_every >= 1, "log_every", "must be >= 1", self.log_every)
        if self.crop_size is not None:
            _require(
                self.patch_size <= self.crop_size <= self.image_size,
                "crop_size", f"must lie in [patch_size, image_size], got", self.crop_size,
            )
            _require(
                self.crop_size % self.patch_size == 0,
                "crop_size", f"must be divisible by patch_size={self.patch_size}", self.crop_size,
            )
        return self


@dataclass
class GeneratorConfig:
    """Synthetic pseudo-pair dataset settings."""

    seed: int = 7
    count: int = 64
    image_size: int = 64
    num_classes: int = 5
    min_objects: int = 4
    max_objects: int = 9
    building_fraction: float = 0.35
    blob_fraction: float = 0.5
    edit_rate: float = 0.5
    min_brightness: float = 0.08
    max_brightness: float = 0.3
    max_hue_degrees: float = 30.0

    def validate(self) -> "GeneratorConfig":
        _require(self.seed >= 0, "seed", "must be >= 0", self.seed)
        _require(self.count >= 1, "count", "must be >= 1", self.count)
        _require(self.image_size >= 16, "image_size", "must be >= 16", self.image_size)
        _require(2 <= self.num_classes <= 5, "num_classes", "must lie in [2, 5]",
                 self.num_classes)
        _require(self.min_objects >= 0, "min_objects", "must be >= 0", self.min_objects)
        _require(self.max_objects >= self.min_objects, "max_objects",
                 f"must be >= min_objects={self.min_objects}", self.max_objects)
        _require(0 <= self.building_fraction <= 1, "building_fraction",
                 "must lie in [0, 1]", self.building_fraction)
        _require(0 <= self.blob_fraction <= 1, "blob_fraction", "must lie in [0, 1]",
                 self.blob_fraction)
        _require(0 <= self.edit_rate <= 1, "edit_rate", "must lie in [0, 1]", self.edit_rate)
        _require(0 <= self.min_brightness <= self.max_brightness, "min_brightness",
                 "must lie in [0, max_brightness]", self.min_brightness)
        _require(self.max_brightness <= 0.3, "max_brightness", "must be <= 0.3",
                 self.max_brightness)
        _require(0 <= self.max_hue_degrees <= 30, "max_hue_degrees",
                 "must lie in [0, 30]", self.max_hue_degrees)
        return self


@dataclass
class Config:
    run: RunConfig
    generator: GeneratorConfig


def _require(cond: bool, field: str, rule: str, value) -> None:
    if not cond:
        raise ConfigError(f"config field '{field}' {rule} (got {value!r})")


_NULLABLE_FIELDS = {
    "crop_size": ["integer", "null"],
    "train_data": ["string", "null"],
    "eval_data": ["string", "null"],
}


def _section_schema(cls) -> dict:
    """Derive the JSON schema of a config section from its default values."""
    type_map = {bool: "boolean", int: "integer", float: "number", str: "string"}
    defaults = cls()
    props = {}
    for f in fields(cls):
        if f.name in _NULLABLE_FIELDS:
            props[f.name] = {"type": _NULLABLE_FIELDS[f.name]}
        else:
            props[f.name] = {"type": type_map[type(getattr(defaults, f.name))]}
    return {"type": "object", "properties": props, "additionalProperties": False}


CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "format_version": {"const": CONFIG_FORMAT_VERSION},
        "run": _section_schema(RunConfig),
        "generator": _section_schema(GeneratorConfig),
    },
    "required": ["format_version"],
    "additionalProperties": False,
}


def parse_config(data: dict) -> Config:
    """Validate a raw dict against the schema and build typed configs."""
    try:
        jsonschema.validate(data, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        path = ".".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config field '{path}': {exc.message}") from None
    run = RunConfig(**data.get("run", {})).validate()
    gen = GeneratorConfig(**data.get("generator", {})).validate()
    # int-typed floats arrive as ints from JSON; normalize them
    for cfg in (run, gen):
        for f in fields(cfg):
            if isinstance(getattr(cfg, f.name), bool):
                continue
            if isinstance(f.default, float) and isinstance(getattr(cfg, f.name), int):
                setattr(cfg, f.name, float(getattr(cfg, f.name)))
    return Config(run=run, generator=gen)


def config_to_dict(config: Config) -> dict:
    return {
        "format_version": CONFIG_FORMAT_VERSION,
        "run": asdict(config.run),
        "generator": asdict(config.generator),
    }


def load_config(path) -> Config:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return parse_config(data)


def save_config(config: Config, path) -> None:
    Path(path).write_text(json.dumps(config_to_dict(config), indent=1, sort_keys=True))
