"""Binary checkpoint codec.

Layout: magic "SOKEckpt1", then a uint32 parameter count, then per parameter:
uint16 name length, utf-8 name, uint8 ndim, uint32 dims, raw little-endian
float32 payload.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import InputError

MAGIC = b"SOKEckpt1"


def save_checkpoint(path: str | Path, params: dict[str, np.ndarray]) -> None:
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(params)))
        for name, value in params.items():
            arr = np.asarray(value, dtype="<f4")
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def load_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    path = Path(path)
    blob = path.read_bytes()
    if blob[: len(MAGIC)] != MAGIC:
        raise InputError(f"{path}: not a SOKE checkpoint (bad magic)")
    offset = len(MAGIC)
    (count,) = struct.unpack_from("<I", blob, offset)
    offset += 4
    params: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", blob, offset)
        offset += 2
        name = blob[offset: offset + name_len].decode("utf-8")
        offset += name_len
        (ndim,) = struct.unpack_from("<B", blob, offset)
        offset += 1
        shape = struct.unpack_from(f"<{ndim}I", blob, offset)
        offset += 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(blob, dtype="<f4", count=size, offset=offset).reshape(shape)
        offset += 4 * size
        params[name] = arr.copy()
    return params
