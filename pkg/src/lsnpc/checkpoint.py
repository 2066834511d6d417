"""Binary checkpoint format shared by the classifier and the latent model.

Layout (all integers little-endian):

    magic  b"LSNP"
    version u8
    meta_len u32, meta utf-8 text: sorted "key=value" lines
    count u32
    per array, sorted by name:
        name_len u16, name utf-8, ndim u8, ndim x u32 dims, float64 payload

Sorting plus repr-based metadata makes saves byte-deterministic, so equal
digests imply equal checkpoints.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np

MAGIC = b"LSNP"
VERSION = 1

__all__ = [
    "MAGIC",
    "VERSION",
    "serialize_params",
    "deserialize_params",
    "save_params",
    "load_params",
    "digest",
    "file_digest",
]


def serialize_params(params: dict[str, np.ndarray], meta: dict[str, str]) -> bytes:
    chunks = [MAGIC, struct.pack("<B", VERSION)]
    meta_text = "".join(f"{k}={meta[k]}\n" for k in sorted(meta))
    meta_bytes = meta_text.encode("utf-8")
    chunks.append(struct.pack("<I", len(meta_bytes)))
    chunks.append(meta_bytes)
    chunks.append(struct.pack("<I", len(params)))
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name], dtype=np.float64)
        name_bytes = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(name_bytes)))
        chunks.append(name_bytes)
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.astype("<f8").tobytes())
    return b"".join(chunks)


def deserialize_params(blob: bytes) -> tuple[dict[str, np.ndarray], dict[str, str]]:
    if blob[:4] != MAGIC:
        raise ValueError("not a checkpoint file: bad magic")
    version = blob[4]
    if version != VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    offset = 5
    (meta_len,) = struct.unpack_from("<I", blob, offset)
    offset += 4
    meta_text = blob[offset : offset + meta_len].decode("utf-8")
    offset += meta_len
    meta: dict[str, str] = {}
    for line in meta_text.splitlines():
        key, _, value = line.partition("=")
        meta[key] = value
    (count,) = struct.unpack_from("<I", blob, offset)
    offset += 4
    params: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", blob, offset)
        offset += 2
        name = blob[offset : offset + name_len].decode("utf-8")
        offset += name_len
        ndim = blob[offset]
        offset += 1
        shape = struct.unpack_from(f"<{ndim}I", blob, offset)
        offset += 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(blob, dtype="<f8", count=size, offset=offset)
        offset += 8 * size
        params[name] = arr.reshape(shape).astype(np.float64)
    if offset != len(blob):
        raise ValueError("trailing bytes after checkpoint payload")
    return params, meta


def save_params(path, params: dict[str, np.ndarray], meta: dict[str, str]) -> None:
    blob = serialize_params(params, meta)
    with open(path, "wb") as fh:
        fh.write(blob)


def load_params(path) -> tuple[dict[str, np.ndarray], dict[str, str]]:
    with open(path, "rb") as fh:
        return deserialize_params(fh.read())


def digest(params: dict[str, np.ndarray], meta: dict[str, str]) -> str:
    return hashlib.sha256(serialize_params(params, meta)).hexdigest()


def file_digest(path) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()
