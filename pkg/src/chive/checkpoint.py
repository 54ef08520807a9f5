"""Binary checkpoint container.

Layout (all integers little-endian)::

    b"CHIVECKP"            8-byte magic
    uint32 version         currently 1
    uint32 header_length
    header                 UTF-8 JSON: model kind/config, tensor table, meta
    data                   float64 little-endian values, tensors back to back
    sha256                 32-byte digest of header + data
"""
from __future__ import annotations

import hashlib
import json
import struct
from collections import OrderedDict
from pathlib import Path

import numpy as np

MAGIC = b"CHIVECKP"
VERSION = 1


class CheckpointError(ValueError):
    pass


def encode_checkpoint(tensors: "dict[str, np.ndarray]", header_extra: dict) -> bytes:
    table, chunks, offset = [], [], 0
    for name, value in tensors.items():
        v = np.ascontiguousarray(value, dtype="<f8")
        table.append({"name": name, "shape": list(v.shape), "offset": offset, "count": int(v.size)})
        chunks.append(v.tobytes())
        offset += v.size
    header = dict(header_extra)
    header["tensors"] = table
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    data = b"".join(chunks)
    digest = hashlib.sha256(hbytes + data).digest()
    return MAGIC + struct.pack("<II", VERSION, len(hbytes)) + hbytes + data + digest


def decode_checkpoint(blob: bytes) -> tuple["OrderedDict[str, np.ndarray]", dict]:
    if len(blob) < 16 + 32 or blob[:8] != MAGIC:
        raise CheckpointError("not a checkpoint (bad magic or truncated)")
    version, hlen = struct.unpack("<II", blob[8:16])
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    body, digest = blob[16:-32], blob[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError("checksum mismatch")
    header = json.loads(body[:hlen].decode())
    data = np.frombuffer(body[hlen:], dtype="<f8")
    tensors = OrderedDict()
    for entry in header.pop("tensors"):
        start, count = entry["offset"], entry["count"]
        if start + count > data.size:
            raise CheckpointError(f"tensor {entry['name']} extends past data")
        tensors[entry["name"]] = data[start:start + count].reshape(entry["shape"]).astype(np.float64)
    return tensors, header


def save_model(path: str | Path, model, meta: dict | None = None,
               optimizer_state: "dict[str, np.ndarray] | None" = None) -> None:
    tensors = OrderedDict(model.store.values())
    for name, value in (optimizer_state or {}).items():
        tensors[f"optimizer/{name}"] = value
    header = {"model_kind": model.kind, "model_config": model.config.to_dict(), "meta": meta or {}}
    Path(path).write_bytes(encode_checkpoint(tensors, header))


def load_model(path: str | Path):
    """Returns ``(model, meta, optimizer_state)``."""
    from .model import ModelConfig, build_model

    tensors, header = decode_checkpoint(Path(path).read_bytes())
    config = ModelConfig.from_dict(header["model_config"])
    if config.kind != header["model_kind"]:
        raise CheckpointError("model kind in header disagrees with config")
    model = build_model(config, seed=0)
    params = {k: v for k, v in tensors.items() if not k.startswith("optimizer/")}
    opt = {k[len("optimizer/"):]: v for k, v in tensors.items() if k.startswith("optimizer/")}
    model.store.load(params)
    return model, header.get("meta", {}), opt
