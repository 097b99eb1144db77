"""Versioned binary checkpoints for :class:`MlpModel`.

Layout (all integers little-endian)::

    offset  size  content
    0       8     magic  b"MIMOLAB\\x00"
    8       4     uint32 format version (currently 1)
    12      4     uint32 header length H
    16      H     UTF-8 JSON header
    16+H    ...   arrays listed in header["arrays"], in order, as '<f8' row-major
    end-32  32    SHA-256 of every preceding byte

The JSON header carries the architecture, the model metadata (K, M_R, M_T,
L, train_snr_db, ...), the mode, the Adam step counter and the name and
shape of every array. Arrays are the parameters, then the batch-norm
buffers, then the Adam first and second moments (prefixed ``adam_m.`` and
``adam_v.``).
"""

from __future__ import annotations

import hashlib
import json
import os
import struct

import numpy as np

from ..errors import CheckpointFormatError
from .network import MlpArchitecture, MlpModel, init_model

MAGIC = b"MIMOLAB\x00"
FORMAT_VERSION = 1
_DIGEST = 32


def _named_arrays(model: MlpModel):
    yield from model.params.items()
    yield from model.buffers.items()
    for k, v in model.adam_m.items():
        yield f"adam_m.{k}", v
    for k, v in model.adam_v.items():
        yield f"adam_v.{k}", v


def to_bytes(model: MlpModel) -> bytes:
    arrays = list(_named_arrays(model))
    header = {
        "format_version": FORMAT_VERSION,
        "architecture": model.arch.to_dict(),
        "meta": model.meta,
        "mode": model.mode,
        "adam_step": model.adam_step,
        "arrays": [{"name": k, "shape": list(v.shape)} for k, v in arrays],
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    body = b"".join(np.ascontiguousarray(v, dtype="<f8").tobytes() for _, v in arrays)
    blob = MAGIC + struct.pack("<II", FORMAT_VERSION, len(head)) + head + body
    return blob + hashlib.sha256(blob).digest()


def save_model(model: MlpModel, path) -> None:
    """Write ``model`` to ``path`` atomically (temporary file + rename)."""
    path = os.fspath(path)
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(to_bytes(model))
    os.replace(tmp, path)


def from_bytes(blob: bytes) -> MlpModel:
    if len(blob) < len(MAGIC) + 8 + _DIGEST or not blob.startswith(MAGIC):
        raise CheckpointFormatError("not a model checkpoint (bad magic or too short)")
    payload, digest = blob[:-_DIGEST], blob[-_DIGEST:]
    if hashlib.sha256(payload).digest() != digest:
        raise CheckpointFormatError("checksum mismatch: file is truncated or corrupt")
    version, head_len = struct.unpack_from("<II", payload, len(MAGIC))
    if version != FORMAT_VERSION:
        raise CheckpointFormatError(f"unsupported checkpoint version {version}")
    offset = len(MAGIC) + 8
    try:
        header = json.loads(payload[offset:offset + head_len].decode("utf-8"))
        arch_fields = header["architecture"]
        arch = MlpArchitecture(**arch_fields)
    except (ValueError, KeyError, TypeError) as exc:
        raise CheckpointFormatError(f"unreadable header: {exc}") from None
    if header.get("format_version") != version:
        raise CheckpointFormatError("header version disagrees with the file version")
    offset += head_len

    # the declared array shapes must be exactly those the architecture implies
    template = init_model(arch, np.random.default_rng(0))
    expected = {k: v.shape for k, v in _named_arrays(template)}
    declared = [(a["name"], tuple(a["shape"])) for a in header["arrays"]]
    if dict(declared) != expected or len(declared) != len(expected):
        raise CheckpointFormatError("declared arrays do not match the architecture widths")

    values = {}
    for name, shape in declared:
        count = int(np.prod(shape))
        end = offset + 8 * count
        if end > len(payload):
            raise CheckpointFormatError(f"array {name} runs past the end of the file")
        values[name] = np.frombuffer(payload, dtype="<f8", count=count, offset=offset).reshape(shape).astype(float)
        offset = end
    if offset != len(payload):
        raise CheckpointFormatError("trailing bytes after the last array")

    model = MlpModel(
        arch=arch,
        params={k: values[k] for k in template.params},
        buffers={k: values[k] for k in template.buffers},
        adam_m={k: values[f"adam_m.{k}"] for k in template.params},
        adam_v={k: values[f"adam_v.{k}"] for k in template.params},
        adam_step=int(header["adam_step"]),
        mode=header["mode"],
        meta=header.get("meta", {}),
    )
    return model


def load_model(path) -> MlpModel:
    with open(path, "rb") as fh:
        return from_bytes(fh.read())
