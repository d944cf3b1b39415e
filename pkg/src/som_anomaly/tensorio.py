"""Binary tensor and model container formats.

Tensor files ("SMDT"): magic | u16 version=1 | u8 dtype (0 = float32) |
u8 ndim | ndim x u32 extents | row-major little-endian payload | u32 CRC32
(IEEE) of all prior bytes.

Model files ("SMDM"): magic | u16 version=1 | u32 K | u32 D | f32 eps |
u32 top_k | 16-byte config digest | K*K node records (centroid D x f32,
packed lower-triangular Cholesky factor D*(D+1)/2 x f32, u32 count) |
u32 CRC32 of all prior bytes.

All multi-byte fields are little-endian. Declared shapes are validated
against the actual payload length before any buffer is materialized.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import TensorFormatError
from .scoring import NodeStatistics
from .som import SomGrid

TENSOR_MAGIC = b"SMDT"
MODEL_MAGIC = b"SMDM"
FORMAT_VERSION = 1
DTYPE_F32 = 0
_DTYPES = {DTYPE_F32: np.dtype("<f4")}
_TENSOR_HEAD = struct.Struct("<4sHBB")
_MODEL_HEAD = struct.Struct("<4sHIIfI16s")
_CRC = struct.Struct("<I")
DIGEST_SIZE = 16


@dataclass(frozen=True)
class TensorFile:
    """An n-dimensional float32 array plus its declared shape."""

    shape: tuple[int, ...]
    data: np.ndarray

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float32)
        shape = tuple(int(s) for s in self.shape)
        if any(s < 0 for s in shape):
            raise TensorFormatError(f"negative extent in shape {shape}")
        if data.size != _element_count(shape):
            raise TensorFormatError(
                f"shape {shape} implies {_element_count(shape)} elements, data has {data.size}"
            )
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "data", data.reshape(shape))


@dataclass(frozen=True)
class ModelMeta:
    """Header fields of a model file beyond the grid itself."""

    K: int
    D: int
    eps: float
    top_k: int
    config_digest: bytes


def _element_count(shape) -> int:
    count = 1
    for s in shape:
        count *= int(s)
    return count


def _check_crc(blob: bytes, what: str):
    if len(blob) < _CRC.size:
        raise TensorFormatError(f"{what}: truncated before checksum")
    stored = _CRC.unpack_from(blob, len(blob) - _CRC.size)[0]
    if zlib.crc32(blob[: -_CRC.size]) != stored:
        raise TensorFormatError(f"{what}: checksum mismatch")


def write_tensor(t: TensorFile, path) -> None:
    """Serialize a TensorFile; read_tensor inverts the result bit-exactly."""
    header = _TENSOR_HEAD.pack(TENSOR_MAGIC, FORMAT_VERSION, DTYPE_F32, len(t.shape))
    extents = struct.pack(f"<{len(t.shape)}I", *t.shape)
    payload = np.ascontiguousarray(t.data, dtype="<f4").tobytes()
    blob = header + extents + payload
    with open(path, "wb") as fh:
        fh.write(blob)
        fh.write(_CRC.pack(zlib.crc32(blob)))


def read_tensor(path) -> TensorFile:
    """Parse a tensor file, rejecting bad magic, truncation, and trailing bytes."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _TENSOR_HEAD.size:
        raise TensorFormatError(f"{path}: truncated header")
    magic, version, dtype_code, ndim = _TENSOR_HEAD.unpack_from(blob, 0)
    if magic != TENSOR_MAGIC:
        raise TensorFormatError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise TensorFormatError(f"{path}: unsupported version {version}")
    if dtype_code not in _DTYPES:
        raise TensorFormatError(f"{path}: unsupported dtype code {dtype_code}")
    dtype = _DTYPES[dtype_code]
    offset = _TENSOR_HEAD.size
    if len(blob) < offset + 4 * ndim:
        raise TensorFormatError(f"{path}: truncated extent table")
    shape = struct.unpack_from(f"<{ndim}I", blob, offset)
    offset += 4 * ndim
    expected = _element_count(shape) * dtype.itemsize
    actual = len(blob) - offset - _CRC.size
    if actual < expected:
        raise TensorFormatError(
            f"{path}: payload holds {max(actual, 0)} bytes, shape {shape} needs {expected}"
        )
    if actual > expected:
        raise TensorFormatError(f"{path}: {actual - expected} trailing payload bytes")
    _check_crc(blob, str(path))
    data = np.frombuffer(blob, dtype=dtype, count=_element_count(shape), offset=offset)
    return TensorFile(tuple(shape), data.copy())


def config_digest_bytes(digest) -> bytes:
    """Normalize a config digest (hex string or raw bytes) to 16 raw bytes."""
    if isinstance(digest, str):
        digest = bytes.fromhex(digest)
    if len(digest) != DIGEST_SIZE:
        raise TensorFormatError(f"config digest must be {DIGEST_SIZE} bytes, got {len(digest)}")
    return bytes(digest)


def save_model(
    grid: SomGrid,
    stats: list[NodeStatistics],
    path,
    top_k: int = 4,
    config_digest: bytes = b"\x00" * DIGEST_SIZE,
) -> None:
    """Write grid + per-node statistics; float state is stored as float32."""
    if len(stats) != grid.n_nodes:
        raise TensorFormatError(f"{len(stats)} stats records for {grid.n_nodes} nodes")
    eps = stats[0].eps if stats else 0.0
    for i, st in enumerate(stats):
        if st.index != i:
            raise TensorFormatError(f"stats record {i} carries node index {st.index}")
        if st.eps != eps:
            raise TensorFormatError("stats records disagree on eps")
        if st.dim != grid.dim:
            raise TensorFormatError(f"node {i} dim {st.dim} != grid dim {grid.dim}")
    digest = config_digest_bytes(config_digest)
    parts = [_MODEL_HEAD.pack(MODEL_MAGIC, FORMAT_VERSION, grid.K, grid.dim, eps, top_k, digest)]
    for i, st in enumerate(stats):
        parts.append(grid.weights[i].astype("<f4").tobytes())
        parts.append(st.packed_factor().astype("<f4").tobytes())
        parts.append(struct.pack("<I", st.count))
    blob = b"".join(parts)
    with open(path, "wb") as fh:
        fh.write(blob)
        fh.write(_CRC.pack(zlib.crc32(blob)))


def load_model(path) -> tuple[SomGrid, list[NodeStatistics], ModelMeta]:
    """Parse a model file back into a grid, node statistics, and header metadata."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _MODEL_HEAD.size:
        raise TensorFormatError(f"{path}: truncated header")
    magic, version, K, D, eps, top_k, digest = _MODEL_HEAD.unpack_from(blob, 0)
    if magic != MODEL_MAGIC:
        raise TensorFormatError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise TensorFormatError(f"{path}: unsupported version {version}")
    packed_len = D * (D + 1) // 2
    record = 4 * D + 4 * packed_len + 4
    expected = _MODEL_HEAD.size + K * K * record + _CRC.size
    if len(blob) != expected:
        raise TensorFormatError(f"{path}: file holds {len(blob)} bytes, header implies {expected}")
    _check_crc(blob, str(path))
    weights = np.empty((K * K, D), dtype=np.float64)
    stats = []
    offset = _MODEL_HEAD.size
    for i in range(K * K):
        centroid = np.frombuffer(blob, dtype="<f4", count=D, offset=offset).astype(np.float64)
        offset += 4 * D
        packed = np.frombuffer(blob, dtype="<f4", count=packed_len, offset=offset)
        offset += 4 * packed_len
        count = struct.unpack_from("<I", blob, offset)[0]
        offset += 4
        weights[i] = centroid
        stats.append(
            NodeStatistics.from_packed(i, centroid, count, packed.astype(np.float64), eps)
        )
    grid = SomGrid(K, weights)
    return grid, stats, ModelMeta(K, D, float(eps), top_k, digest)
