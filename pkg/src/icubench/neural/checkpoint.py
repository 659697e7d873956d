"""Flat binary model checkpoints bound to the vocabulary they were trained with.

Layout (little-endian):

    magic        4 bytes  b"ICKP"
    version      uint16
    schema_hash  32 bytes sha256 of the active schema + vocabularies
    meta_len     uint32, then meta_len bytes of UTF-8 JSON (kind, task, dims)
    n_params     uint32
    per parameter, in sorted name order:
        name_len uint16, name bytes
        ndim     uint8, shape int64 each
        data     float64 row-major

Loading rejects files whose schema hash differs from the active one, so a
model can never silently run against a different vocabulary.
"""

from __future__ import annotations

import hashlib
import json
import struct
from typing import Mapping, Sequence

import numpy as np

from ..errors import SchemaError
from ..schema import VariableSpec

MAGIC = b"ICKP"
VERSION = 1


def schema_hash(schema: Sequence[VariableSpec]) -> bytes:
    digest = hashlib.sha256()
    for spec in schema:
        digest.update(spec.name.encode("utf-8"))
        digest.update(spec.kind.encode("utf-8"))
        if spec.normal_value is not None:
            digest.update(repr(spec.normal_value).encode("ascii"))
        for v in spec.vocab or ():
            digest.update(b"\x00" + v.encode("utf-8"))
    return digest.digest()


def save_checkpoint(path, params: Mapping[str, np.ndarray], schema_digest: bytes, meta: dict) -> None:
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<H", VERSION))
        fh.write(schema_digest)
        fh.write(struct.pack("<I", len(meta_bytes)))
        fh.write(meta_bytes)
        fh.write(struct.pack("<I", len(params)))
        for name in sorted(params):
            raw = name.encode("utf-8")
            arr = np.ascontiguousarray(params[name], dtype="<f8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<B", arr.ndim))
            for dim in arr.shape:
                fh.write(struct.pack("<q", dim))
            fh.write(arr.tobytes())


def load_checkpoint(path, expected_schema_digest: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise SchemaError(f"{path}: not a checkpoint file")
        (version,) = struct.unpack("<H", fh.read(2))
        if version != VERSION:
            raise SchemaError(f"{path}: unsupported checkpoint version {version}")
        digest = fh.read(32)
        if digest != expected_schema_digest:
            raise SchemaError(f"{path}: checkpoint schema hash does not match the active vocabulary")
        (meta_len,) = struct.unpack("<I", fh.read(4))
        meta = json.loads(fh.read(meta_len).decode("utf-8"))
        (n_params,) = struct.unpack("<I", fh.read(4))
        params: dict[str, np.ndarray] = {}
        for _ in range(n_params):
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode("utf-8")
            (ndim,) = struct.unpack("<B", fh.read(1))
            shape = struct.unpack(f"<{ndim}q", fh.read(8 * ndim))
            count = int(np.prod(shape)) if ndim else 1
            params[name] = np.frombuffer(fh.read(8 * count), dtype="<f8").reshape(shape).copy()
    return meta, params
