"""Flat binary container for networks and arrays.

Layout (all integers unsigned little-endian, all floats little-endian f64)::

    magic      8 bytes   b"HGAILCK1"
    n_entries  u32
    entry*:
        name_len  u16, name (utf-8)
        kind      u8      0 = MLP, 1 = array
        MLP:   n_layers u32, then per layer: rows u32, cols u32,
               rows*cols weights (row-major), rows biases
        array: ndim u32, dims u32 * ndim, data (row-major)
"""

from __future__ import annotations

import io
import os
import struct

import numpy as np

from .nn import MlpParams

MAGIC = b"HGAILCK1"
KIND_MLP = 0
KIND_ARRAY = 1


class CheckpointError(ValueError):
    pass


def _f64(a) -> bytes:
    return np.ascontiguousarray(a, dtype="<f8").tobytes()


def dumps(entries: dict) -> bytes:
    """Serialize a mapping of name -> MlpParams | array-like."""
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", len(entries)))
    for name, value in entries.items():
        raw = name.encode("utf-8")
        buf.write(struct.pack("<H", len(raw)))
        buf.write(raw)
        if isinstance(value, MlpParams):
            buf.write(struct.pack("<BI", KIND_MLP, len(value.weights)))
            for w, b in zip(value.weights, value.biases):
                buf.write(struct.pack("<II", *w.shape))
                buf.write(_f64(w))
                buf.write(_f64(b))
        else:
            arr = np.asarray(value, dtype=np.float64)
            buf.write(struct.pack("<BI", KIND_ARRAY, arr.ndim))
            buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            buf.write(_f64(arr))
    return buf.getvalue()


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError("truncated checkpoint")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def floats(self, shape) -> np.ndarray:
        count = int(np.prod(shape, dtype=np.int64))
        return np.frombuffer(self.take(8 * count), dtype="<f8").astype(np.float64).reshape(shape)


def loads(data: bytes) -> dict:
    r = _Reader(data)
    if r.take(len(MAGIC)) != MAGIC:
        raise CheckpointError("not an hgail checkpoint (bad magic)")
    (n_entries,) = r.unpack("<I")
    out = {}
    for _ in range(n_entries):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode("utf-8")
        kind, count = r.unpack("<BI")
        if kind == KIND_MLP:
            weights, biases = [], []
            for _ in range(count):
                rows, cols = r.unpack("<II")
                weights.append(r.floats((rows, cols)))
                biases.append(r.floats((rows,)))
            out[name] = MlpParams(weights, biases)
        elif kind == KIND_ARRAY:
            shape = r.unpack(f"<{count}I")
            out[name] = r.floats(shape)
        else:
            raise CheckpointError(f"unknown entry kind {kind} for {name!r}")
    if r.pos != len(data):
        raise CheckpointError("trailing bytes after last entry")
    return out


def save(path, entries: dict) -> None:
    data = dumps(entries)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def load(path) -> dict:
    with open(path, "rb") as fh:
        return loads(fh.read())
