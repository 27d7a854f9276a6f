"""Binary container for named float64 tensors.

Layout (all integers little-endian):
    magic "CLRA" | u8 version=1 | u32 tensor count
    per tensor: u16 name length | name utf-8 | u8 ndim | u32 per dim
    then each tensor's raw float64 data, C-order, in manifest order.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError

MAGIC = b"CLRA"
VERSION = 1


def save_tensors(path: str | Path, tensors: dict[str, np.ndarray]) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<BI", VERSION, len(tensors)))
        for name, arr in tensors.items():
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        for arr in tensors.values():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def _read_exact(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise FormatError(f"truncated tensor file while reading {what}")
    return data


def load_tensors(path: str | Path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        if _read_exact(fh, 4, "magic") != MAGIC:
            raise FormatError(f"{path}: bad magic, not a tensor file")
        version, count = struct.unpack("<BI", _read_exact(fh, 5, "header"))
        if version != VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        manifest: list[tuple[str, tuple[int, ...]]] = []
        for _ in range(count):
            (name_len,) = struct.unpack("<H", _read_exact(fh, 2, "name length"))
            name = _read_exact(fh, name_len, "name").decode("utf-8")
            (ndim,) = struct.unpack("<B", _read_exact(fh, 1, "ndim"))
            shape = struct.unpack(f"<{ndim}I", _read_exact(fh, 4 * ndim, "shape"))
            manifest.append((name, shape))
        tensors: dict[str, np.ndarray] = {}
        for name, shape in manifest:
            size = int(np.prod(shape, dtype=np.int64)) if shape else 1
            raw = _read_exact(fh, 8 * size, f"data for {name!r}")
            tensors[name] = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes after tensor data")
    return tensors
