"""Writer for the shared binary tensor container.

Layout: magic "SMDT" | u16 version=1 | u8 dtype (0 = float32) | u8 ndim |
ndim x u32 extents | row-major little-endian float32 payload | u32 CRC32 of
all prior bytes.
"""

from __future__ import annotations

import os
import struct
import zlib
from pathlib import Path

import numpy as np

MAGIC = b"SMDT"
VERSION = 1
DTYPE_F32 = 0


def tensor_bytes(array: np.ndarray) -> bytes:
    array = np.ascontiguousarray(array, dtype="<f4")
    header = struct.pack("<4sHBB", MAGIC, VERSION, DTYPE_F32, array.ndim)
    header += struct.pack(f"<{array.ndim}I", *array.shape)
    blob = header + array.tobytes()
    return blob + struct.pack("<I", zlib.crc32(blob))


def write_tensor(array: np.ndarray, path) -> None:
    """Atomic write: temp file in the target directory, then rename."""
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    tmp.write_bytes(tensor_bytes(array))
    os.replace(tmp, path)


def write_sidecar(tensor_path, line: str) -> None:
    """One-line provenance record next to a tensor file."""
    path = Path(str(tensor_path) + ".meta")
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    tmp.write_text(line.rstrip("\n") + "\n", encoding="utf-8")
    os.replace(tmp, path)
