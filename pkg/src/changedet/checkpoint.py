"""Checkpoint archive: one zip holding named float64 arrays plus a header.

Layout:

* ``header.json`` with a mandatory ``format_version``, an ``arrays`` table of
  parameter path -> shape, and a free-form ``meta`` dict (training step,
  hyperparameters, ...);
* ``arrays/<parameter-path>.npy`` with each array stored little-endian
  float64 (the ``.npy`` header carries dtype and shape explicitly).

Parameter paths mirror the model's module tree with ``/`` separators, e.g.
``dtco/sigma`` or ``image_encoder/blocks/0/attn/qkv/weight``.
"""

from __future__ import annotations

import io
import json
import os
import zipfile

import numpy as np
import torch

__all__ = [
    "CheckpointError",
    "FORMAT_VERSION",
    "save_arrays",
    "load_arrays",
    "save_model_checkpoint",
    "load_model_checkpoint",
]

FORMAT_VERSION = 1
_ZIP_DATE = (1980, 1, 1, 0, 0, 0)  # fixed timestamp keeps archives byte-reproducible


class CheckpointError(ValueError):
    """Raised for malformed or incompatible checkpoint files."""


def save_arrays(path, arrays: dict[str, np.ndarray], meta: dict | None = None) -> None:
    """Write arrays to ``path`` atomically (temp file then rename)."""
    header = {
        "format_version": FORMAT_VERSION,
        "meta": meta or {},
        "arrays": {name: list(arr.shape) for name, arr in arrays.items()},
    }
    tmp = f"{path}.tmp"
    with zipfile.ZipFile(tmp, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        info = zipfile.ZipInfo("header.json", date_time=_ZIP_DATE)
        zf.writestr(info, json.dumps(header, sort_keys=True, indent=1))
        for name, arr in arrays.items():
            buf = io.BytesIO()
            np.save(buf, np.ascontiguousarray(arr, dtype="<f8"), allow_pickle=False)
            info = zipfile.ZipInfo(f"arrays/{name}.npy", date_time=_ZIP_DATE)
            zf.writestr(info, buf.getvalue())
    os.replace(tmp, path)


def load_arrays(path) -> tuple[dict[str, np.ndarray], dict]:
    """Read a checkpoint archive; returns (arrays, meta)."""
    try:
        zf = zipfile.ZipFile(path, "r")
    except (OSError, zipfile.BadZipFile) as exc:
        raise CheckpointError(f"cannot open checkpoint {path}: {exc}") from exc
    with zf:
        try:
            header = json.loads(zf.read("header.json"))
        except KeyError:
            raise CheckpointError(f"checkpoint {path} is missing header.json") from None
        version = header.get("format_version")
        if version is None:
            raise CheckpointError(f"checkpoint {path} header lacks format_version")
        if version != FORMAT_VERSION:
            raise CheckpointError(
                f"checkpoint {path} has format_version {version}, expected {FORMAT_VERSION}"
            )
        arrays = {}
        for name, shape in header.get("arrays", {}).items():
            data = zf.read(f"arrays/{name}.npy")
            arr = np.load(io.BytesIO(data), allow_pickle=False)
            if list(arr.shape) != shape:
                raise CheckpointError(
                    f"array {name} has shape {list(arr.shape)}, header says {shape}"
                )
            arrays[name] = arr
    return arrays, header.get("meta", {})


def _param_path(name: str) -> str:
    return name.replace(".", "/")


def save_model_checkpoint(path, model: torch.nn.Module, meta: dict | None = None) -> None:
    """Serialize every model parameter and buffer as float64 arrays."""
    arrays = {
        _param_path(name): tensor.detach().cpu().numpy()
        for name, tensor in model.state_dict().items()
    }
    save_arrays(path, arrays, meta)


def load_model_checkpoint(path, model: torch.nn.Module) -> dict:
    """Restore parameters into ``model`` (cast to its dtypes); returns meta."""
    arrays, meta = load_arrays(path)
    state = model.state_dict()
    expected = {_param_path(name): name for name in state}
    missing = sorted(set(expected) - set(arrays))
    unexpected = sorted(set(arrays) - set(expected))
    if missing or unexpected:
        raise CheckpointError(
            f"checkpoint {path} does not match the model: "
            f"missing={missing[:4]}, unexpected={unexpected[:4]}"
        )
    new_state = {}
    for arr_name, param_name in expected.items():
        arr = arrays[arr_name]
        target = state[param_name]
        if list(arr.shape) != list(target.shape):
            raise CheckpointError(
                f"parameter {param_name} has shape {list(target.shape)}, "
                f"checkpoint holds {list(arr.shape)}"
            )
        new_state[param_name] = torch.from_numpy(arr).to(target.dtype)
    model.load_state_dict(new_state)
    return meta
