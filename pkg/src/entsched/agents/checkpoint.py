"""Portable checkpoints: a text header followed by little-endian float32 arrays.

Layout::

    entsched-checkpoint 1
    variant qupairs
    blocks 3
    ...
    tensor embed.w 7,32
    ...
    end
    <raw float32 data, tensors in header order, row-major>
"""
from __future__ import annotations

import dataclasses
from collections import OrderedDict

import numpy as np

from ..errors import CheckpointError
from .nn import ModelConfig, build_model

MAGIC = "entsched-checkpoint"
VERSION = 1
_HEADER_FIELDS = [f.name for f in dataclasses.fields(ModelConfig)]
_INT_FIELDS = {f.name for f in dataclasses.fields(ModelConfig) if f.name not in ("variant", "fc_n_qubits")}


def save_checkpoint(model, path, extra: dict | None = None) -> None:
    """Write ``model`` to ``path``.  Parameters are stored as float32."""
    cfg = model.config
    lines = [f"{MAGIC} {VERSION}"]
    for name in _HEADER_FIELDS:
        value = getattr(cfg, name)
        lines.append(f"{name} {'none' if value is None else value}")
    lines.append(f"n_dim {cfg.n_dim}")
    for key, value in (extra or {}).items():
        lines.append(f"meta.{key} {value}")
    blobs = []
    for name, arr in model.params.items():
        lines.append(f"tensor {name} {','.join(str(s) for s in arr.shape)}")
        blobs.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    lines.append("end")
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode("ascii"))
        for b in blobs:
            fh.write(b)


def read_header(path) -> tuple[dict, list, dict, int]:
    """``(config fields, [(name, shape)], metadata, data offset)``."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
    pos = 0
    fields, tensors, meta = {}, [], {}
    first = True
    while True:
        nl = raw.find(b"\n", pos)
        if nl < 0:
            raise CheckpointError(f"{path}: header is truncated (no 'end' line)")
        try:
            line = raw[pos:nl].decode("ascii")
        except UnicodeDecodeError:
            raise CheckpointError(f"{path}: header is not text") from None
        pos = nl + 1
        if first:
            parts = line.split()
            if len(parts) != 2 or parts[0] != MAGIC:
                raise CheckpointError(f"{path}: not an entsched checkpoint")
            if parts[1] != str(VERSION):
                raise CheckpointError(f"{path}: field 'version' is {parts[1]}, this reader supports {VERSION}")
            first = False
            continue
        if line == "end":
            break
        key, _, value = line.partition(" ")
        if key == "tensor":
            name, _, shape = value.partition(" ")
            try:
                dims = tuple(int(s) for s in shape.split(",") if s)
            except ValueError:
                raise CheckpointError(f"{path}: bad shape for tensor {name!r}: {shape!r}") from None
            tensors.append((name, dims))
        elif key.startswith("meta."):
            meta[key[5:]] = value
        else:
            fields[key] = value
    return fields, tensors, meta, pos


def _config_from_fields(fields: dict, path) -> ModelConfig:
    kwargs = {}
    for name in _HEADER_FIELDS:
        if name not in fields:
            raise CheckpointError(f"{path}: header field {name!r} is missing")
        value = fields[name]
        if name == "variant":
            kwargs[name] = value
        elif name == "fc_n_qubits":
            kwargs[name] = None if value == "none" else int(value)
        else:
            try:
                kwargs[name] = int(value)
            except ValueError:
                raise CheckpointError(f"{path}: header field {name!r} is not an integer: {value!r}") from None
    cfg = ModelConfig(**kwargs)
    if "n_dim" in fields and int(fields["n_dim"]) != cfg.n_dim:
        raise CheckpointError(f"{path}: field 'n_dim' is {fields['n_dim']}, variant {cfg.variant} uses {cfg.n_dim}")
    return cfg


def load_checkpoint(path, with_meta: bool = False):
    """Rebuild the model saved by :func:`save_checkpoint`."""
    fields, tensors, meta, offset = read_header(path)
    cfg = _config_from_fields(fields, path)
    with open(path, "rb") as fh:
        fh.seek(offset)
        data = fh.read()
    expected = build_model(cfg).params
    if [n for n, _ in tensors] != list(expected):
        raise CheckpointError(f"{path}: tensor names do not match a {cfg.variant} model with this header")
    params = OrderedDict()
    pos = 0
    for name, shape in tensors:
        if shape != expected[name].shape:
            raise CheckpointError(f"{path}: tensor {name!r} has shape {shape}, expected {expected[name].shape}")
        count = int(np.prod(shape)) if shape else 1
        nbytes = 4 * count
        if pos + nbytes > len(data):
            raise CheckpointError(f"{path}: file is truncated inside tensor {name!r}")
        params[name] = np.frombuffer(data, dtype="<f4", count=count, offset=pos).astype(np.float32).reshape(shape)
        pos += nbytes
    if pos != len(data):
        raise CheckpointError(f"{path}: {len(data) - pos} trailing bytes after the last tensor")
    model = build_model(cfg, params)
    return (model, meta) if with_meta else model
