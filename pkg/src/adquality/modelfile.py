"""Binary model container: magic, version, JSON header, float64 payload.

Layout::

    8 bytes   magic b"ADQMODEL"
    uint32    format version
    uint32    header length H
    H bytes   UTF-8 JSON (sorted keys), space-padded so the payload is 8-byte aligned
    ...       little-endian float64 arrays, concatenated in header order
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"ADQMODEL"
VERSION = 1


class ModelFormatError(ValueError):
    pass


def dumps(header: dict, arrays: list[tuple[str, np.ndarray]]) -> bytes:
    header = dict(header)
    header["arrays"] = [{"name": n, "shape": list(np.shape(a))} for n, a in arrays]
    text = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    text += b" " * (-(16 + len(text)) % 8)
    payload = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for _, a in arrays)
    return MAGIC + struct.pack("<II", VERSION, len(text)) + text + payload


def loads(data: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    if len(data) < 16 or data[:8] != MAGIC:
        raise ModelFormatError("not a model file (bad magic)")
    version, hlen = struct.unpack("<II", data[8:16])
    if version != VERSION:
        raise ModelFormatError(f"unsupported model file version {version}")
    try:
        header = json.loads(data[16:16 + hlen])
    except ValueError as exc:
        raise ModelFormatError(f"corrupt header: {exc}") from None
    arrays, pos = {}, 16 + hlen
    for spec in header["arrays"]:
        shape = tuple(spec["shape"])
        size = int(np.prod(shape)) if shape else 1
        chunk = data[pos:pos + 8 * size]
        if len(chunk) != 8 * size:
            raise ModelFormatError(f"truncated payload in array {spec['name']!r}")
        arrays[spec["name"]] = np.frombuffer(chunk, dtype="<f8").reshape(shape).astype(np.float64)
        pos += 8 * size
    if pos != len(data):
        raise ModelFormatError("trailing bytes after payload")
    return header, arrays
