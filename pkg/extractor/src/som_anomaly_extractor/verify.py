"""Independent minimal parser used to audit extraction output.

Deliberately shares no code with the writer: every field is re-read from raw
bytes so a writer bug cannot hide behind its own serializer.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from pathlib import Path


@dataclass(frozen=True)
class Finding:
    path: str
    reason: str


def check_tensor_bytes(blob: bytes, name: str) -> list[Finding]:
    findings = []
    if len(blob) < 8:
        return [Finding(name, f"file too short ({len(blob)} bytes)")]
    magic = blob[0:4]
    if magic != b"SMDT":
        findings.append(Finding(name, f"bad magic {magic!r}"))
        return findings
    version = int.from_bytes(blob[4:6], "little")
    if version != 1:
        findings.append(Finding(name, f"unsupported version {version}"))
        return findings
    dtype = blob[6]
    if dtype != 0:
        findings.append(Finding(name, f"unsupported dtype code {dtype}"))
        return findings
    ndim = blob[7]
    if len(blob) < 8 + 4 * ndim + 4:
        findings.append(Finding(name, "truncated extent table"))
        return findings
    extents = struct.unpack_from(f"<{ndim}I", blob, 8)
    count = 1
    for e in extents:
        count *= e
    payload = len(blob) - 8 - 4 * ndim - 4
    if payload != 4 * count:
        findings.append(
            Finding(name, f"payload holds {payload} bytes, shape {extents} needs {4 * count}")
        )
    stored_crc = struct.unpack_from("<I", blob, len(blob) - 4)[0]
    if zlib.crc32(blob[:-4]) != stored_crc:
        findings.append(Finding(name, "CRC32 mismatch"))
    return findings


def verify_file(path) -> list[Finding]:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        return [Finding(str(path), f"unreadable ({exc})")]
    return check_tensor_bytes(blob, str(path))


def verify_dir(directory) -> list[Finding]:
    """Re-read every tensor file under directory; empty list means healthy."""
    directory = Path(directory)
    findings = []
    paths = sorted(directory.glob("*.smdt"))
    if not paths:
        return [Finding(str(directory), "no .smdt files found")]
    for path in paths:
        findings.extend(verify_file(path))
    return findings
